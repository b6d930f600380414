import sys

from structrag.cli import main

if __name__ == "__main__":
    # e.g. python app.py --mode structured parse reports/*.pdf
    sys.exit(main())

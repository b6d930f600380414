"""
Test inputs: synthetic glyph runs for unit tests and small PDFs drawn with
reportlab for end-to-end checks. Coordinates passed to the PDF helpers are
top-origin baselines so they read like the parser's own coordinates.
"""
import io

from reportlab.lib.pagesizes import letter
from reportlab.pdfgen import canvas

from structrag.config import LayoutConfig
from structrag.doc_model import BoundingBox, Glyph, Segment
from structrag.layout_parser import _make_line

PAGE_W, PAGE_H = letter
CHAR_W = 0.5    # synthetic glyph width, share of font size
SPACE_W = 0.3   # synthetic word gap, share of font size


# ------------------------------------------------------------ synthetic

def glyphs_for(text, x, baseline, size=10.0, page=0, font="Helvetica"):
    out = []
    cx = x
    for ch in text:
        if ch == " ":
            cx += SPACE_W * size
            continue
        out.append(Glyph(ch, BoundingBox(cx, baseline - size, cx + CHAR_W * size, baseline), size, page, font))
        cx += CHAR_W * size
    return out


def line_for(text, x, baseline, size=10.0, page=0, font="Helvetica", cfg=None):
    return _make_line(glyphs_for(text, x, baseline, size, page, font), cfg or LayoutConfig())


def hrule(x0, x1, y):
    return Segment(x0, y, x1, y, "h")


def vrule(x, y0, y1):
    return Segment(x, y0, x, y1, "v")


# ------------------------------------------------------------------ PDF

def _put(c, x, baseline, text, size=10, font="Helvetica"):
    c.setFont(font, size)
    c.drawString(x, PAGE_H - baseline, text)


def _rule(c, x0, y, x1):
    c.line(x0, PAGE_H - y, x1, PAGE_H - y)


def _vline(c, x, y0, y1):
    c.line(x, PAGE_H - y0, x, PAGE_H - y1)


def build_pdf(*page_painters) -> bytes:
    buf = io.BytesIO()
    c = canvas.Canvas(buf, pagesize=letter, invariant=1)
    for paint in page_painters:
        paint(c)
        c.showPage()
    c.save()
    return buf.getvalue()


# Case 1: header stored last, bold heading, a partially ruled ten-column
# table with a spanning header, a wrapped note and a two-column section.

REPORT_HEADER = "Annual Report 2021"
TABLE_LABELS = ["Revenue", "Operating income", "Net profit", "Capital expenditure"]
SPANNING_HEADER = "Year ended March 31, 2021"
NOTE_LINES = [
    "Note: Figures exclude the discontinued segment following the",
    "divestiture completed during the year and are shown in millions",
    "of rupees unless otherwise stated.",
]
LEFT_COLUMN = [
    "Retail volumes rose in every region this",
    "year as new stores opened in the north",
    "and demand recovered after lockdowns.",
    None,
    "Export revenue also improved because new",
    "shipping contracts cut freight costs and",
    "currency weakness made our products more",
]
RIGHT_COLUMN = [
    "competitive in overseas markets during the",
    "second half of the year as shipments to",
    "European customers rose from the low",
    "base recorded in the previous year and",
    "margins widened in the final quarter too.",
    None,
    "Looking ahead we expect further steady gains.",
]
DIVIDEND_LINE = "The board recommends a final dividend of four rupees per share."


def table_value(row, col):
    return str(100 + 10 * row + col)


def _case1_page0(c):
    _put(c, 72, 90, "Overview of Operations", 14, "Helvetica-Bold")
    _put(c, 72, 115, "The company delivered steady growth across its businesses during")
    _put(c, 72, 128, "the year while continuing to invest in new capacity and in the")
    _put(c, 72, 141, "digital platforms that support its customers and partners.")

    _rule(c, 72, 165, 550)
    _put(c, 72, 175, "Metric", 7)
    _put(c, 320, 175, SPANNING_HEADER, 7)
    _rule(c, 180, 178, 550)
    for r, label in enumerate(TABLE_LABELS):
        baseline = 188 + 11 * r
        _put(c, 72, baseline, label, 7)
        for col in range(9):
            _put(c, 182 + 44 * col, baseline, table_value(r, col), 7)
    _rule(c, 72, 226, 550)

    for i, text in enumerate(NOTE_LINES):
        _put(c, 72, 246 + 10 * i, text, 8)

    for column, x in ((LEFT_COLUMN, 72), (RIGHT_COLUMN, 340)):
        for i, text in enumerate(column):
            if text:
                _put(c, x, 295 + 13 * i, text)

    _put(c, 300, 770, "Page 1", 9)
    # drawn last: storage order puts the running header at the end
    _put(c, 72, 40, REPORT_HEADER, 9)


def _case1_page1(c):
    _put(c, 72, 40, REPORT_HEADER, 9)
    _put(c, 72, 100, DIVIDEND_LINE)
    _put(c, 300, 770, "Page 2", 9)


def case1_pdf() -> bytes:
    return build_pdf(_case1_page0, _case1_page1)


# Case 2: a borderless table titled on page 0 that continues on page 1.

MDA_HEADER = "Management Discussion and Analysis"
TABLE_TITLE = "Table 4: Key operating metrics"
METRIC_COLUMNS = (72, 250, 330, 410)
METRIC_ROWS_P0 = [
    ("Metric", "FY2020", "FY2021", "FY2022"),
    ("Subscribers (millions)", "120", "135", "150"),
    ("Average revenue per user", "310", "325", "342"),
    ("Churn rate (%)", "2.1", "1.9", "1.7"),
]
METRIC_ROWS_P1 = [
    ("Net additions (millions)", "12", "15", "15"),
    ("Data usage (GB)", "9.8", "12.4", "15.0"),
    ("Store count", "410", "455", "498"),
]


def _metric_rows(c, rows, first_baseline, columns=METRIC_COLUMNS):
    for r, row in enumerate(rows):
        for x, text in zip(columns, row):
            _put(c, x, first_baseline + 14 * r, text, 9)


def _case2_page0(c):
    _put(c, 72, 40, MDA_HEADER, 9)
    _put(c, 72, 100, "Operating performance improved on every key measure tracked")
    _put(c, 72, 113, "by management, as summarised in the table below.")
    _put(c, 72, 140, TABLE_TITLE)
    _metric_rows(c, METRIC_ROWS_P0, 154)
    _put(c, 300, 770, "Page 1", 9)


def _case2_page1(c, last_column_shift=0.0):
    _put(c, 72, 40, MDA_HEADER, 9)
    columns = METRIC_COLUMNS[:-1] + (METRIC_COLUMNS[-1] + last_column_shift,)
    _metric_rows(c, METRIC_ROWS_P1, 80, columns)
    _put(c, 72, 140, "These figures are unaudited and may be restated in later filings.")
    _put(c, 300, 770, "Page 2", 9)


def case2_pdf(last_column_shift=0.0) -> bytes:
    """`last_column_shift` moves the continuation's last column on page 1."""
    return build_pdf(_case2_page0, lambda c: _case2_page1(c, last_column_shift))


# Ruled grids: a plain 3x3 and one with a column span and a row span.

GRID_XS = (72, 172, 272, 372)
GRID_YS = (100, 120, 140, 160)


def _grid_text(c, cells):
    for (r, col), text in cells.items():
        _put(c, GRID_XS[col] + 8, GRID_YS[r] + 14, text, 9)


def _plain_grid(c):
    for y in GRID_YS:
        _rule(c, GRID_XS[0], y, GRID_XS[-1])
    for x in GRID_XS:
        _vline(c, x, GRID_YS[0], GRID_YS[-1])
    _grid_text(c, {(r, col): f"R{r}C{col}" for r in range(3) for col in range(3)})


def plain_grid_pdf() -> bytes:
    return build_pdf(_plain_grid)


def _merged_grid(c):
    _rule(c, 72, 100, 372)
    _rule(c, 72, 120, 372)
    _rule(c, 72, 140, 272)      # open under the last column: rows 1-2 merge there
    _rule(c, 72, 160, 372)
    _vline(c, 72, 100, 160)
    _vline(c, 172, 120, 160)    # open in row 0: columns 0-1 merge there
    _vline(c, 272, 100, 160)
    _vline(c, 372, 100, 160)
    _grid_text(c, {
        (0, 0): "Region", (0, 2): "Q3",
        (1, 0): "North", (1, 1): "East", (1, 2): "Total",
        (2, 0): "South", (2, 1): "West",
    })


def merged_grid_pdf() -> bytes:
    return build_pdf(_merged_grid)


def single_paragraph_pdf(text="Plain text on a single page.") -> bytes:
    return build_pdf(lambda c: _put(c, 72, 100, text))

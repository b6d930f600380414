"""Structure-aware PDF parsing and chunking for retrieval-augmented question answering."""

__version__ = "1.0.0"

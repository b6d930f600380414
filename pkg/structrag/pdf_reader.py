"""
Positioned text and ruling extraction from text-based PDFs.

Glyphs come back in content-stream (storage) order, which is frequently not
the order a person reads the page in. Ordering is the layout parser's job.
"""
import io
import logging
import re

import pdfplumber

from .doc_model import BoundingBox, Glyph, PageContent, Segment
from .errors import PDFParseError, UnsupportedInputError

logger = logging.getLogger(__name__)

MIN_SEGMENT_LENGTH = 1.0  # points; shorter edges are rendering debris
HEADER_SEARCH_WINDOW = 1024


def _is_encryption_error(exc) -> bool:
    seen = set()
    while exc is not None and id(exc) not in seen:
        seen.add(id(exc))
        name = type(exc).__name__.lower()
        if "encrypt" in name or "password" in name:
            return True
        nested = [a for a in getattr(exc, "args", ()) if isinstance(a, BaseException)]
        exc = exc.__cause__ or exc.__context__ or (nested[0] if nested else None)
    return False


def _failure_offset(data: bytes) -> int:
    """Best guess at where parsing broke: the trailer pointer, else end of input."""
    idx = data.rfind(b"startxref")
    return idx if idx >= 0 else len(data)


def _clamp_box(x0, top, x1, bottom) -> BoundingBox:
    x0, x1 = sorted((max(0.0, float(x0)), max(0.0, float(x1))))
    y0, y1 = sorted((max(0.0, float(top)), max(0.0, float(bottom))))
    return BoundingBox(x0, y0, x1, y1)


def _read_page(index: int, page) -> PageContent:
    glyphs = []
    for char in page.chars:
        text = char.get("text") or ""
        if not text.strip():
            # spaces are re-derived from gaps when lines are built
            continue
        size = float(char.get("size") or 0.0)
        if size <= 0:
            size = float(char["bottom"]) - float(char["top"])
        if size <= 0:
            continue
        glyphs.append(Glyph(
            text=text,
            bbox=_clamp_box(char["x0"], char["top"], char["x1"], char["bottom"]),
            font_size=size,
            page=index,
            fontname=str(char.get("fontname") or ""),
        ))

    segments = []
    for edge in page.edges:
        orientation = edge.get("orientation")
        if orientation not in ("h", "v"):
            continue
        box = _clamp_box(edge["x0"], edge["top"], edge["x1"], edge["bottom"])
        seg = Segment(box.x0, box.y0, box.x1, box.y1, orientation)
        if seg.length >= MIN_SEGMENT_LENGTH:
            segments.append(seg)

    return PageContent(
        index=index,
        width=float(page.width),
        height=float(page.height),
        glyphs=tuple(glyphs),
        segments=tuple(segments),
        image_count=len(page.images),
    )


def extract_pages(pdf_bytes: bytes) -> list[PageContent]:
    """Reads every page's glyphs, ruling segments and size."""
    if not pdf_bytes:
        raise PDFParseError("empty input", 0)
    header_at = pdf_bytes.find(b"%PDF-", 0, HEADER_SEARCH_WINDOW)
    if header_at < 0:
        raise PDFParseError("missing %PDF- header", 0)
    if re.search(rb"/Encrypt\b", pdf_bytes):
        raise UnsupportedInputError("encrypted PDF unsupported")

    try:
        with pdfplumber.open(io.BytesIO(pdf_bytes)) as pdf:
            pages = [_read_page(i, page) for i, page in enumerate(pdf.pages)]
    except Exception as e:
        if _is_encryption_error(e):
            raise UnsupportedInputError("encrypted PDF unsupported") from e
        raise PDFParseError(f"malformed PDF: {e}", _failure_offset(pdf_bytes)) from e

    if not pages:
        raise PDFParseError("PDF has no pages", _failure_offset(pdf_bytes))
    for page in pages:
        if not page.glyphs and page.image_count:
            raise UnsupportedInputError(f"OCR unsupported: page {page.index} is a scanned image without text")
    logger.debug("Extracted %d page(s), %d glyphs", len(pages), sum(len(p.glyphs) for p in pages))
    return pages


def extract_glyphs(pdf_bytes: bytes) -> list[list[Glyph]]:
    """Per-page glyph lists in storage order."""
    return [list(page.glyphs) for page in extract_pages(pdf_bytes)]


def glyph_run_text(glyphs, word_gap_factor: float) -> str:
    """Joins glyphs in the given order, inserting a space at word gaps."""
    parts = []
    prev = None
    for g in glyphs:
        if prev is not None:
            gap = g.bbox.x0 - prev.bbox.x1
            if gap > word_gap_factor * min(g.font_size, prev.font_size) or g.bbox.x0 < prev.bbox.x0:
                parts.append(" ")
        parts.append(g.text)
        prev = g
    return "".join(parts)


def extract_flat_text(pdf_bytes: bytes, line_tolerance: float = 0.5, word_gap_factor: float = 0.2) -> str:
    """
    Storage-order serialization, the way a rule-based text dumper sees a PDF:
    every run of glyphs on one baseline becomes a line ending in "\\n", pages
    are separated by a blank line. No paragraph, table or reading-order
    recovery happens here.
    """
    page_texts = []
    for page in extract_pages(pdf_bytes):
        lines = []
        run = []
        for g in page.glyphs:
            if run and abs(g.baseline - run[-1].baseline) > line_tolerance * g.font_size:
                lines.append(glyph_run_text(run, word_gap_factor))
                run = []
            run.append(g)
        if run:
            lines.append(glyph_run_text(run, word_gap_factor))
        page_texts.append("".join(line + "\n" for line in lines))
    return "\n".join(page_texts)

"""
Rule-based layout analysis: glyphs -> lines -> regions -> blocks.

The pipeline per document is

    extract_pages -> build_lines (per page)
                  -> detect_headers_footers (whole document)
                  -> detect_tables / recognize_table_structure (per page)
                  -> detect_reading_order (per page, recursive XY-cut)
                  -> assemble_blocks (whole document, sequential)

Per-page stages are pure and may run in a thread pool (`jobs`); assembly
is a single sequential pass so block order is deterministic.
"""
import hashlib
import logging
import re
import statistics
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .config import LayoutConfig
from .doc_model import BoundingBox, Block, Document, Table, TableCell, TextLine
from .errors import DegenerateTableError
from .pdf_reader import extract_glyphs, extract_pages, glyph_run_text
from .tables import column_signature, detect_tables, recognize_table_structure, signatures_match

logger = logging.getLogger(__name__)

TERMINAL_PUNCTUATION = (".", "!", "?", ":", ";", "。", "！", "？")
CAPTION_RE = re.compile(r"^(Figure|Fig\.)\s*\d|^图\s*\d")
TABLE_TITLE_RE = re.compile(r"^(Table\b|表)", re.I)
HEADING_MAX_WORDS = 15
TITLE_MAX_DISTANCE = 2.5  # multiples of the title's font size

__all__ = [
    "PageLayout", "extract_glyphs", "build_lines", "detect_reading_order",
    "detect_headers_footers", "detect_tables", "recognize_table_structure",
    "analyze_page", "assemble_blocks", "parse_pdf", "parse_pdf_pages",
]


@dataclass
class PageLayout:
    """Everything assemble_blocks needs to know about one page."""

    index: int
    width: float
    height: float
    regions: list = field(default_factory=list)  # reading-order regions of TextLine | Table
    headers: list = field(default_factory=list)
    footers: list = field(default_factory=list)


# ---------------------------------------------------------------- lines

def _make_line(glyphs, cfg: LayoutConfig) -> TextLine:
    glyphs = tuple(sorted(glyphs, key=lambda g: g.bbox.x0))
    baselines = sorted(g.baseline for g in glyphs)
    return TextLine(
        glyphs=glyphs,
        bbox=BoundingBox.union(g.bbox for g in glyphs),
        baseline_y=baselines[len(baselines) // 2],
        text=glyph_run_text(glyphs, cfg.word_gap_factor),
    )


def build_lines(glyphs, cfg: LayoutConfig) -> list[TextLine]:
    """
    Groups one page's glyphs into visual lines. Glyphs join a line when their
    baseline is within line_merge_tolerance x font size of the line's first
    glyph; a line is then cut wherever the horizontal gap reaches
    column_gap_min, so no line bridges a gutter or a table column gap.
    """
    clusters = []
    for g in sorted(glyphs, key=lambda g: (g.baseline, g.bbox.x0)):
        if clusters:
            anchor = clusters[-1][0]
            tol = cfg.line_merge_tolerance * max(g.font_size, anchor.font_size)
            if abs(g.baseline - anchor.baseline) <= tol:
                clusters[-1].append(g)
                continue
        clusters.append([g])

    lines = []
    for cluster in clusters:
        cluster.sort(key=lambda g: g.bbox.x0)
        run = [cluster[0]]
        for g in cluster[1:]:
            if g.bbox.x0 - max(x.bbox.x1 for x in run) >= cfg.column_gap_min:
                lines.append(_make_line(run, cfg))
                run = []
            run.append(g)
        lines.append(_make_line(run, cfg))
    lines.sort(key=lambda l: (l.baseline_y, l.bbox.x0))
    return lines


# -------------------------------------------------------- reading order

def _projection_cuts(items, axis: str, threshold: float):
    """Midpoints of whitespace bands wider than `threshold` along x or y."""
    if axis == "x":
        spans = sorted((i.bbox.x0, i.bbox.x1) for i in items)
    else:
        spans = sorted((i.bbox.y0, i.bbox.y1) for i in items)
    cuts = []
    end = spans[0][1]
    for lo, hi in spans[1:]:
        if lo - end >= threshold:
            cuts.append((end + lo) / 2)
        end = max(end, hi)
    return cuts


def _split(items, cuts, axis: str):
    groups = [[] for _ in range(len(cuts) + 1)]
    for item in items:
        c = item.bbox.center[0 if axis == "x" else 1]
        k = 0
        while k < len(cuts) and c >= cuts[k]:
            k += 1
        groups[k].append(item)
    return [g for g in groups if g]


def _xy_cut(items, h_gap: float, v_gap: float):
    if len(items) <= 1:
        return [list(items)]
    cuts = _projection_cuts(items, "y", h_gap)
    if cuts:
        axis = "y"
    else:
        cuts = _projection_cuts(items, "x", v_gap)
        axis = "x"
    if not cuts:
        return [sorted(items, key=lambda i: (i.bbox.y1, i.bbox.x0))]
    regions = []
    for group in _split(items, cuts, axis):
        regions.extend(_xy_cut(group, h_gap, v_gap))
    return regions


def detect_reading_order(lines, cfg: LayoutConfig) -> list[list]:
    """
    Recursive XY-cut. Horizontal whitespace bands wider than the normal
    leading split first; inside each band, vertical gaps of at least
    column_gap_min separate columns. Returns regions top-to-bottom,
    left-to-right; concatenated they are a permutation of the input.

    Items only need a `bbox`, so tables can be ordered alongside lines.
    """
    items = list(lines)
    if not items:
        return []
    heights = [i.bbox.height for i in items if isinstance(i, TextLine)] or [1.0]
    h_gap = max(cfg.para_gap_factor - 1.0, 0.0) * statistics.median(heights)
    return _xy_cut(items, max(h_gap, 1e-6), cfg.column_gap_min)


# -------------------------------------------------- headers and footers

def _normalize_furniture(text: str) -> str:
    text = re.sub(r"\d+", "", text).lower()
    return " ".join(text.split())


def detect_headers_footers(pages, cfg: LayoutConfig, page_heights=None) -> list[dict]:
    """
    Repeating lines in the top/bottom band of the page.

    `pages` is a list of per-page TextLine lists. Returns, per page, a dict
    mapping line index to "page_header" or "page_footer". Needs at least two
    pages; digits are ignored when comparing text so page numbers match.
    """
    result = [dict() for _ in pages]
    if len(pages) < 2:
        return result
    if page_heights is None:
        tallest = max((l.bbox.y1 for lines in pages for l in lines), default=0.0)
        page_heights = [tallest] * len(pages)

    candidates = []  # (page, line index, kind, key)
    for p, lines in enumerate(pages):
        height = page_heights[p]
        for i, line in enumerate(lines):
            if line.bbox.y1 <= cfg.header_footer_band * height:
                kind = "page_header"
            elif line.bbox.y0 >= (1 - cfg.header_footer_band) * height:
                kind = "page_footer"
            else:
                continue
            candidates.append((p, i, kind, _normalize_furniture(line.text)))

    pages_with = {}
    for p, _, kind, key in candidates:
        pages_with.setdefault((kind, key), set()).add(p)

    needed = max(2, cfg.header_footer_repeat_min * len(pages))
    for p, i, kind, key in candidates:
        if len(pages_with[(kind, key)]) >= needed:
            result[p][i] = kind
    return result


# ------------------------------------------------------------- page pass

def analyze_page(page, lines, furniture: dict, cfg: LayoutConfig) -> PageLayout:
    """Tables, then reading order, for one page's non-furniture lines."""
    layout = PageLayout(index=page.index, width=page.width, height=page.height)
    content = []
    for i, line in enumerate(lines):
        kind = furniture.get(i)
        if kind == "page_header":
            layout.headers.append(line)
        elif kind == "page_footer":
            layout.footers.append(line)
        else:
            content.append(line)

    items = []
    taken = set()
    for region in detect_tables(content, page.segments, cfg):
        try:
            table = recognize_table_structure(region, cfg)
        except DegenerateTableError as e:
            logger.debug("Page %d: demoting table candidate to text (%s)", page.index, e)
            continue
        items.append(table)
        taken.update(id(l) for l in region.lines)
    items.extend(l for l in content if id(l) not in taken)
    layout.regions = detect_reading_order(items, cfg)
    return layout


# -------------------------------------------------------------- assembly

def _body_font_size(layouts) -> float:
    sizes = Counter()
    for layout in layouts:
        for region in layout.regions:
            for item in region:
                if isinstance(item, TextLine):
                    sizes[round(item.font_size, 1)] += len(item.glyphs)
    return sizes.most_common(1)[0][0] if sizes else 0.0


def _x_overlap(a: BoundingBox, b: BoundingBox) -> bool:
    return min(a.x1, b.x1) > max(a.x0, b.x0)


def _same_style(a: TextLine, b: TextLine) -> bool:
    return abs(a.font_size - b.font_size) < 0.5 and a.is_bold == b.is_bold


def _adjacent(a: TextLine, b: TextLine, cfg: LayoutConfig) -> bool:
    step = abs(b.baseline_y - a.baseline_y)
    return a.page == b.page and step <= cfg.para_gap_factor * max(a.font_size, b.font_size) and _x_overlap(a.bbox, b.bbox)


def _is_heading_style(line: TextLine, body: float) -> bool:
    return line.font_size >= body + 1 or line.is_bold


def _find_title(table: Table, lines, body: float):
    best = None
    for line in lines:
        if line.bbox.y1 > table.bbox.y0 + 1 or not _x_overlap(line.bbox, table.bbox):
            continue
        if table.bbox.y0 - line.bbox.y1 > TITLE_MAX_DISTANCE * line.font_size:
            continue
        if best is None or line.bbox.y1 > best.bbox.y1:
            best = line
    if best is None:
        return None
    if TABLE_TITLE_RE.match(best.text.strip()) or (body and best.font_size < body - 0.5):
        return best
    return None


def _continues(prev: TextLine, line: TextLine, cfg: LayoutConfig) -> bool:
    if line.page == prev.page and line.baseline_y > prev.baseline_y and _x_overlap(prev.bbox, line.bbox):
        # same column, whatever region the XY-cut put it in
        return line.baseline_y - prev.baseline_y <= cfg.para_gap_factor * prev.font_size
    # new column or new page: a sentence left open carries over
    first = line.text.lstrip()[:1]
    return first.islower() or not prev.text.rstrip().endswith(TERMINAL_PUNCTUATION)


def _merge_tables(first: Table, second: Table) -> Table:
    shifted = tuple(
        TableCell(c.row + first.n_rows, c.col, c.row_span, c.col_span, c.text, c.bbox)
        for c in second.cells
    )
    return Table(
        cells=first.cells + shifted,
        n_rows=first.n_rows + second.n_rows,
        n_cols=first.n_cols,
        bbox=first.bbox,
        pages=first.pages + tuple(p for p in second.pages if p not in first.pages),
        title=first.title,
    )


def assemble_blocks(pages, cfg: LayoutConfig, source_id: str = "") -> Document:
    """
    Turns per-page layouts into one ordered Document: merges lines into
    paragraphs (also across columns and pages when a sentence is left
    open), tags headings and figure captions, attaches table titles, and
    joins a table that continues at the top of the next page.
    """
    body = _body_font_size(pages)
    heading_sizes = set()
    for layout in pages:
        for region in layout.regions:
            for item in region:
                if isinstance(item, TextLine) and item.font_size >= body + 1:
                    heading_sizes.add(round(item.font_size, 1))
    ranked = sorted(heading_sizes, reverse=True)

    def heading_level(line: TextLine) -> int:
        size = round(line.font_size, 1)
        return ranked.index(size) + 1 if size in ranked else len(ranked) + 1

    per_page = {layout.index: [] for layout in pages}
    paragraph = []          # open paragraph lines
    # (block page, block position, page of its last part) while a table is the latest content
    open_table = None

    def flush():
        nonlocal paragraph
        if paragraph:
            first_page = paragraph[0].page
            box = BoundingBox.union(l.bbox for l in paragraph if l.page == first_page)
            per_page.setdefault(first_page, []).append(
                Block(kind="paragraph", bbox=box, page=first_page, order=-1,
                      text="\n".join(l.text for l in paragraph)))
        paragraph = []

    for layout in pages:
        page_lines = [i for region in layout.regions for i in region if isinstance(i, TextLine)]
        titles = {}
        for region in layout.regions:
            for item in region:
                if isinstance(item, Table) and item.title is None:
                    title = _find_title(item, page_lines, body)
                    if title is not None and all(t is not title for t in titles.values()):
                        titles[id(item)] = title
        consumed = {id(t) for t in titles.values()}

        first_on_page = True
        for region in layout.regions:
            for k, item in enumerate(region):
                if isinstance(item, Table):
                    flush()
                    table = item
                    if id(item) in titles:
                        table = Table(item.cells, item.n_rows, item.n_cols, item.bbox, item.pages,
                                      titles[id(item)].text)
                    if (first_on_page and open_table is not None and table.title is None
                            and open_table[2] == layout.index - 1):
                        page, pos, _ = open_table
                        prev_block = per_page[page][pos]
                        tol = cfg.alignment_cluster_tolerance
                        if signatures_match(column_signature(prev_block.table), column_signature(table), tol):
                            merged = _merge_tables(prev_block.table, table)
                            per_page[page][pos] = Block(kind="table", bbox=prev_block.bbox, page=page,
                                                        order=-1, table=merged)
                            logger.debug("Merged table continued from page %d onto page %d", page, layout.index)
                            open_table = (page, pos, layout.index)
                            first_on_page = False
                            continue
                    per_page[layout.index].append(Block(kind="table", bbox=table.bbox, page=layout.index,
                                                        order=-1, table=table))
                    open_table = (layout.index, len(per_page[layout.index]) - 1, layout.index)
                    first_on_page = False
                    continue

                line = item
                if id(line) in consumed:
                    continue
                first_on_page = False
                open_table = None
                text = line.text.strip()
                if CAPTION_RE.match(text):
                    flush()
                    per_page[layout.index].append(Block(kind="figure_caption", bbox=line.bbox,
                                                        page=layout.index, order=-1, text=line.text))
                    continue
                if _is_heading_style(line, body) and line.word_count <= HEADING_MAX_WORDS and any(ch.isalpha() for ch in text):
                    neighbours = [region[j] for j in (k - 1, k + 1) if 0 <= j < len(region)]
                    styled_run = any(isinstance(n, TextLine) and _same_style(n, line) and _adjacent(n, line, cfg)
                                     for n in neighbours)
                    if not styled_run:
                        flush()
                        per_page[layout.index].append(Block(kind="heading", bbox=line.bbox, page=layout.index,
                                                            order=-1, text=line.text,
                                                            heading_level=heading_level(line)))
                        continue
                if paragraph and not _continues(paragraph[-1], line, cfg):
                    flush()
                paragraph.append(line)

    flush()

    blocks = []
    for layout in pages:
        ordered = [Block(kind="page_header", bbox=l.bbox, page=layout.index, order=-1, text=l.text)
                   for l in sorted(layout.headers, key=lambda l: (l.bbox.y0, l.bbox.x0))]
        ordered += per_page.get(layout.index, [])
        ordered += [Block(kind="page_footer", bbox=l.bbox, page=layout.index, order=-1, text=l.text)
                    for l in sorted(layout.footers, key=lambda l: (l.bbox.y0, l.bbox.x0))]
        for b in ordered:
            blocks.append(Block(kind=b.kind, bbox=b.bbox, page=b.page, order=len(blocks), text=b.text,
                                table=b.table, heading_level=b.heading_level))
    return Document(blocks=tuple(blocks), page_count=max(len(pages), 1), source_id=source_id)


# -------------------------------------------------------------- entry points

def parse_pdf_pages(pdf_bytes: bytes, cfg: LayoutConfig = None, source_id: str = None, jobs: int = 1):
    """Like parse_pdf, but also returns the PageContent list (for overlays)."""
    cfg = cfg or LayoutConfig()
    if source_id is None:
        source_id = hashlib.sha1(pdf_bytes or b"").hexdigest()[:16]
    pages = extract_pages(pdf_bytes)

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as executor:
        lines = list(executor.map(lambda p: build_lines(p.glyphs, cfg), pages))
        furniture = detect_headers_footers(lines, cfg, [p.height for p in pages])
        layouts = list(executor.map(lambda i: analyze_page(pages[i], lines[i], furniture[i], cfg),
                                    range(len(pages))))

    doc = assemble_blocks(layouts, cfg, source_id=source_id)
    logger.info("Parsed %s: %d page(s), %d block(s)", source_id, doc.page_count, len(doc.blocks))
    return doc, pages


def parse_pdf(pdf_bytes: bytes, cfg: LayoutConfig = None, source_id: str = None, jobs: int = 1) -> Document:
    """PDF bytes -> Document. Raises PDFParseError / UnsupportedInputError."""
    return parse_pdf_pages(pdf_bytes, cfg, source_id, jobs)[0]

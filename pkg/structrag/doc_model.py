"""
Document structure vocabulary shared by every stage.

Coordinates are PDF points with the origin at the top-left corner of the
page and y growing downward. All types are frozen: a Document is built once
by the parser (or loaded from JSON) and then only read.
"""
import math
from dataclasses import dataclass
from typing import Optional

BLOCK_KINDS = ("paragraph", "table", "heading", "page_header", "page_footer", "figure_caption")
FURNITURE_KINDS = ("page_header", "page_footer")


@dataclass(frozen=True)
class BoundingBox:
    x0: float
    y0: float
    x1: float
    y1: float

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    @property
    def center(self) -> tuple[float, float]:
        return (self.x0 + self.x1) / 2, (self.y0 + self.y1) / 2

    def contains_point(self, x: float, y: float, tol: float = 0.0) -> bool:
        return self.x0 - tol <= x <= self.x1 + tol and self.y0 - tol <= y <= self.y1 + tol

    def intersects(self, other: "BoundingBox") -> bool:
        return not (other.x0 >= self.x1 or other.x1 <= self.x0
                    or other.y0 >= self.y1 or other.y1 <= self.y0)

    def to_list(self) -> list[float]:
        return [self.x0, self.y0, self.x1, self.y1]

    @classmethod
    def union(cls, boxes) -> "BoundingBox":
        boxes = list(boxes)
        if not boxes:
            return cls(0.0, 0.0, 0.0, 0.0)
        return cls(
            min(b.x0 for b in boxes),
            min(b.y0 for b in boxes),
            max(b.x1 for b in boxes),
            max(b.y1 for b in boxes),
        )

    def problems(self) -> list[str]:
        coords = self.to_list()
        if not all(isinstance(c, (int, float)) and math.isfinite(c) for c in coords):
            return ["bbox has a non-finite coordinate"]
        out = []
        if min(coords) < 0:
            out.append("bbox has a negative coordinate")
        if self.x0 > self.x1:
            out.append("bbox x0 > x1")
        if self.y0 > self.y1:
            out.append("bbox y0 > y1")
        return out


@dataclass(frozen=True)
class Glyph:
    text: str
    bbox: BoundingBox
    font_size: float
    page: int
    fontname: str = ""

    def __post_init__(self):
        if not self.text:
            raise ValueError("glyph text must not be empty")
        if not self.font_size > 0:
            raise ValueError(f"glyph font_size must be > 0, got {self.font_size}")

    @property
    def baseline(self) -> float:
        return self.bbox.y1


@dataclass(frozen=True)
class TextLine:
    glyphs: tuple[Glyph, ...]
    bbox: BoundingBox
    baseline_y: float
    text: str = ""

    @property
    def page(self) -> int:
        return self.glyphs[0].page if self.glyphs else 0

    @property
    def font_size(self) -> float:
        sizes = sorted(g.font_size for g in self.glyphs)
        return sizes[len(sizes) // 2] if sizes else 0.0

    @property
    def is_bold(self) -> bool:
        if not self.glyphs:
            return False
        bold = sum(1 for g in self.glyphs if "bold" in g.fontname.lower())
        return bold * 2 > len(self.glyphs)

    @property
    def word_count(self) -> int:
        return len(self.text.split())


@dataclass(frozen=True)
class Segment:
    """A vector ruling line. orientation is 'h' or 'v'."""

    x0: float
    y0: float
    x1: float
    y1: float
    orientation: str

    @property
    def length(self) -> float:
        return self.x1 - self.x0 if self.orientation == "h" else self.y1 - self.y0

    @property
    def position(self) -> float:
        """y of a horizontal rule, x of a vertical one."""
        return (self.y0 + self.y1) / 2 if self.orientation == "h" else (self.x0 + self.x1) / 2


@dataclass(frozen=True)
class PageContent:
    index: int
    width: float
    height: float
    glyphs: tuple[Glyph, ...] = ()
    segments: tuple[Segment, ...] = ()
    image_count: int = 0


@dataclass(frozen=True)
class TableCell:
    row: int
    col: int
    row_span: int
    col_span: int
    text: str
    bbox: BoundingBox = BoundingBox(0.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class Table:
    cells: tuple[TableCell, ...]
    n_rows: int
    n_cols: int
    bbox: BoundingBox
    pages: tuple[int, ...]
    title: Optional[str] = None

    @property
    def duplicated_slots(self) -> int:
        return sum(c.row_span * c.col_span - 1 for c in self.cells)


@dataclass(frozen=True)
class Block:
    kind: str
    bbox: BoundingBox
    page: int
    order: int
    text: str = ""
    table: Optional[Table] = None
    heading_level: Optional[int] = None


@dataclass(frozen=True)
class Document:
    blocks: tuple[Block, ...]
    page_count: int
    source_id: str

    def content_blocks(self):
        """Blocks that carry chunkable content (headers/footers excluded)."""
        return [b for b in self.blocks if b.kind not in FURNITURE_KINDS]

    def heading_tree(self):
        """
        Nests blocks under the closest preceding heading of a lower level.
        Returns a list of {"block": Block | None, "children": [...]} nodes.
        """
        root = {"block": None, "children": []}
        stack = [(0, root)]
        for block in self.content_blocks():
            node = {"block": block, "children": []}
            if block.kind == "heading":
                level = block.heading_level or 1
                while stack[-1][0] >= level:
                    stack.pop()
                stack[-1][1]["children"].append(node)
                stack.append((level, node))
            else:
                stack[-1][1]["children"].append(node)
        return root["children"]


def table_grid_violations(table: Table) -> list[str]:
    """Checks spans, bounds, overlap and full coverage of the slot grid."""
    problems = []
    if not isinstance(table.n_rows, int) or table.n_rows < 1:
        problems.append(f"n_rows must be >= 1, got {table.n_rows}")
    if not isinstance(table.n_cols, int) or table.n_cols < 1:
        problems.append(f"n_cols must be >= 1, got {table.n_cols}")
    if problems:
        return problems

    owner = [[None] * table.n_cols for _ in range(table.n_rows)]
    for i, cell in enumerate(table.cells):
        if cell.row_span < 1 or cell.col_span < 1:
            problems.append(f"cell {i} has span < 1")
            continue
        if (cell.row < 0 or cell.col < 0
                or cell.row + cell.row_span > table.n_rows
                or cell.col + cell.col_span > table.n_cols):
            problems.append(f"cell {i} at ({cell.row},{cell.col}) exceeds the {table.n_rows}x{table.n_cols} grid")
            continue
        for r in range(cell.row, cell.row + cell.row_span):
            for c in range(cell.col, cell.col + cell.col_span):
                if owner[r][c] is not None:
                    problems.append(f"cell {i} overlaps cell {owner[r][c]} at slot ({r},{c})")
                else:
                    owner[r][c] = i
    holes = [(r, c) for r in range(table.n_rows) for c in range(table.n_cols) if owner[r][c] is None]
    if holes:
        problems.append(f"{len(holes)} grid slot(s) uncovered, first at {holes[0]}")
    return problems


def _table_violations(table: Table) -> list[str]:
    problems = list(table_grid_violations(table))
    problems.extend(f"table {p}" for p in table.bbox.problems())
    pages = list(table.pages)
    if not pages:
        problems.append("table pages empty")
    elif any(b != a + 1 for a, b in zip(pages, pages[1:])):
        problems.append(f"table pages not contiguous ascending: {pages}")
    return problems


def validate_document(doc: Document) -> list[str]:
    """
    Returns one description per broken invariant; an empty list means valid.
    Violations are reported as data, never raised.
    """
    violations = []
    if not isinstance(doc.page_count, int) or doc.page_count < 1:
        violations.append(f"document: page_count must be >= 1, got {doc.page_count}")

    seen = set()
    previous = None
    for block in doc.blocks:
        tag = f"block[order={block.order}]"
        if not isinstance(block.order, int) or block.order < 0:
            violations.append(f"{tag}: order must be a non-negative integer")
        if block.order in seen:
            violations.append(f"{tag}: duplicate order")
        seen.add(block.order)
        if previous is not None and block.order < previous:
            violations.append(f"{tag}: blocks not sorted by order")
        previous = block.order

        if block.kind not in BLOCK_KINDS:
            violations.append(f"{tag}: unknown kind {block.kind!r}")
        if isinstance(doc.page_count, int) and not (0 <= block.page < doc.page_count):
            violations.append(f"{tag}: page {block.page} outside [0, {doc.page_count})")
        violations.extend(f"{tag}: {p}" for p in block.bbox.problems())

        if block.kind == "table":
            if block.table is None:
                violations.append(f"{tag}: table block without table")
            else:
                violations.extend(f"{tag}: {p}" for p in _table_violations(block.table))
            if block.text:
                violations.append(f"{tag}: table block must not carry text")
        elif block.table is not None:
            violations.append(f"{tag}: {block.kind} block carries a table")

        if block.kind == "heading":
            if block.heading_level is None or block.heading_level < 1:
                violations.append(f"{tag}: heading needs heading_level >= 1")
        elif block.heading_level is not None:
            violations.append(f"{tag}: heading_level set on a {block.kind} block")
    return violations

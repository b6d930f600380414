"""
Rendering of Documents: markdown for chunk text, JSON for interchange,
HTML for inspection.

Markdown cannot express merged cells, so a cell's text is written into
every grid slot it covers. HTML keeps rowspan/colspan instead.
"""
import json
import re
from dataclasses import dataclass
from typing import Literal, Optional

from bs4 import BeautifulSoup
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .doc_model import BLOCK_KINDS, Block, BoundingBox, Document, Table, TableCell, table_grid_violations
from .errors import DocumentSchemaError, InvalidTableError
from .utils import read_jsonl, write_jsonl

HTML_SHELL = '<!DOCTYPE html><html><head><meta charset="utf-8"/><title></title></head><body></body></html>'


@dataclass(frozen=True)
class RenderedTable:
    markdown: str
    duplicated_cells: int


def _escape_cell(text: str) -> str:
    text = text.replace("|", "\\|")
    return re.sub(r"\s*[\r\n]+\s*", " ", text).strip()


def slot_texts(table: Table) -> list[list[str]]:
    """n_rows x n_cols grid of the text covering each slot."""
    violations = table_grid_violations(table)
    if violations:
        raise InvalidTableError("; ".join(violations))
    grid = [[""] * table.n_cols for _ in range(table.n_rows)]
    for cell in table.cells:
        for r in range(cell.row, cell.row + cell.row_span):
            for c in range(cell.col, cell.col + cell.col_span):
                grid[r][c] = cell.text
    return grid


def table_to_markdown(table: Table) -> RenderedTable:
    grid = slot_texts(table)
    lines = []
    if table.title:
        lines.append(_escape_cell(table.title))
    for r, row in enumerate(grid):
        lines.append("| " + " | ".join(_escape_cell(t) for t in row) + " |")
        if r == 0:
            lines.append("|" + "|".join([" --- "] * table.n_cols) + "|")
    return RenderedTable(markdown="\n".join(lines), duplicated_cells=table.duplicated_slots)


def block_to_text(block: Block) -> str:
    """Chunk text of one block; page furniture contributes nothing."""
    if block.kind in ("page_header", "page_footer"):
        return ""
    if block.kind == "table":
        return table_to_markdown(block.table).markdown if block.table is not None else ""
    return re.sub(r"\s*\n\s*", " ", block.text).strip()


def document_to_markdown(doc: Document) -> str:
    parts = []
    for block in doc.content_blocks():
        text = block_to_text(block)
        if block.kind == "heading":
            text = "#" * min(block.heading_level or 1, 6) + " " + text
        elif block.kind == "figure_caption":
            text = f"*{text}*"
        if text:
            parts.append(text)
    return "\n\n".join(parts) + ("\n" if parts else "")


# ---------------------------------------------------------------- JSON

Box = tuple[float, float, float, float]


class _CellModel(BaseModel):
    model_config = ConfigDict(extra="ignore")

    row: int
    col: int
    row_span: int = 1
    col_span: int = 1
    text: str = ""
    bbox: Optional[Box] = None


class _TableModel(BaseModel):
    model_config = ConfigDict(extra="ignore")

    n_rows: int
    n_cols: int
    title: Optional[str] = None
    cells: list[_CellModel]
    bbox: Optional[Box] = None
    pages: Optional[list[int]] = None


class _BlockModel(BaseModel):
    model_config = ConfigDict(extra="ignore")

    kind: Literal[BLOCK_KINDS]
    order: int
    page: int
    bbox: Box
    text: str = ""
    heading_level: Optional[int] = None
    table: Optional[_TableModel] = None


class _DocumentModel(BaseModel):
    model_config = ConfigDict(extra="ignore")

    source_id: str
    page_count: int
    blocks: list[_BlockModel] = Field(default_factory=list)


def _json_path(loc) -> str:
    path = ""
    for part in loc:
        path += f"[{part}]" if isinstance(part, int) else (f".{part}" if path else str(part))
    return path or "$"


def _table_dict(table: Table) -> dict:
    return {
        "n_rows": table.n_rows,
        "n_cols": table.n_cols,
        "title": table.title,
        "bbox": table.bbox.to_list(),
        "pages": list(table.pages),
        "cells": [
            {"row": c.row, "col": c.col, "row_span": c.row_span, "col_span": c.col_span,
             "text": c.text, "bbox": c.bbox.to_list()}
            for c in table.cells
        ],
    }


def document_to_dict(doc: Document) -> dict:
    blocks = []
    for b in doc.blocks:
        entry = {"kind": b.kind, "order": b.order, "page": b.page, "bbox": b.bbox.to_list()}
        if b.kind == "table":
            entry["table"] = _table_dict(b.table) if b.table is not None else None
        else:
            entry["text"] = b.text
        if b.heading_level is not None:
            entry["heading_level"] = b.heading_level
        blocks.append(entry)
    return {"source_id": doc.source_id, "page_count": doc.page_count, "blocks": blocks}


def document_to_json(doc: Document) -> bytes:
    """Canonical JSON: sorted keys, two-space indent, trailing newline."""
    text = json.dumps(document_to_dict(doc), ensure_ascii=False, sort_keys=True, indent=2)
    return (text + "\n").encode("utf-8")


def _box(values, fallback: BoundingBox) -> BoundingBox:
    return BoundingBox(*values) if values is not None else fallback


def document_from_json(data) -> Document:
    """
    Loads the interchange format (bytes, str or an already-decoded dict).
    Schema problems raise DocumentSchemaError carrying the JSON path, e.g.
    `blocks[3].order`. Invariants beyond the schema are checked separately
    by validate_document.
    """
    if isinstance(data, (bytes, str)):
        try:
            data = json.loads(data)
        except (json.JSONDecodeError, UnicodeDecodeError) as e:
            raise DocumentSchemaError("$", f"not valid JSON: {e}") from e
    try:
        model = _DocumentModel.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        raise DocumentSchemaError(_json_path(first["loc"]), first["msg"]) from e

    blocks = []
    for b in model.blocks:
        bbox = BoundingBox(*b.bbox)
        table = None
        if b.table is not None:
            t = b.table
            cells = tuple(
                TableCell(c.row, c.col, c.row_span, c.col_span, c.text, _box(c.bbox, BoundingBox(0.0, 0.0, 0.0, 0.0)))
                for c in t.cells
            )
            table = Table(cells=cells, n_rows=t.n_rows, n_cols=t.n_cols, bbox=_box(t.bbox, bbox),
                          pages=tuple(t.pages) if t.pages is not None else (b.page,), title=t.title)
        blocks.append(Block(kind=b.kind, bbox=bbox, page=b.page, order=b.order,
                            text=b.text if b.kind != "table" else "", table=table,
                            heading_level=b.heading_level))
    return Document(blocks=tuple(blocks), page_count=model.page_count, source_id=model.source_id)


# ---------------------------------------------------------------- HTML

def _append_table(soup, parent, table: Table):
    node = soup.new_tag("table")
    if table.title:
        caption = soup.new_tag("caption")
        caption.string = table.title
        node.append(caption)
    for r in range(table.n_rows):
        tr = soup.new_tag("tr")
        for cell in sorted((c for c in table.cells if c.row == r), key=lambda c: c.col):
            td = soup.new_tag("th" if r == 0 else "td")
            if cell.row_span > 1:
                td["rowspan"] = str(cell.row_span)
            if cell.col_span > 1:
                td["colspan"] = str(cell.col_span)
            td.string = cell.text
            tr.append(td)
        node.append(tr)
    parent.append(node)


def document_to_html(doc: Document) -> str:
    """Self-contained HTML; merged cells keep their rowspan/colspan."""
    soup = BeautifulSoup(HTML_SHELL, "lxml")
    soup.title.string = doc.source_id
    body = soup.body
    for block in doc.blocks:
        if block.kind == "heading":
            node = soup.new_tag(f"h{min(block.heading_level or 1, 6)}")
            node.string = block_to_text(block)
        elif block.kind == "table":
            if block.table is not None:
                _append_table(soup, body, block.table)
            continue
        elif block.kind == "figure_caption":
            node = soup.new_tag("figure")
            caption = soup.new_tag("figcaption")
            caption.string = block_to_text(block)
            node.append(caption)
        else:
            node = soup.new_tag("p")
            node.string = re.sub(r"\s*\n\s*", " ", block.text).strip()
            if block.kind != "paragraph":
                node["class"] = block.kind
        node["data-order"] = str(block.order)
        body.append(node)
    return str(soup)


# -------------------------------------------------------------- chunks

def chunks_to_jsonl(chunks, path):
    """One chunk object per line: {id, text, token_count, source, atomic_oversize}."""
    return write_jsonl(path, (c.to_dict() for c in chunks))


def chunks_from_jsonl(path):
    from .chunker import Chunk
    return [Chunk.from_dict(row) for row in read_jsonl(path)]

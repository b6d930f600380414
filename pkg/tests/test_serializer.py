import json
import random
import tempfile
import unittest
from pathlib import Path

from bs4 import BeautifulSoup
from lxml import etree

from structrag.chunker import Chunk
from structrag.doc_model import Block, BoundingBox, Document, Table, TableCell
from structrag.errors import DocumentSchemaError, InvalidTableError
from structrag.layout_parser import parse_pdf
from structrag.serializer import (
    block_to_text, chunks_from_jsonl, chunks_to_jsonl, document_from_json, document_to_html, document_to_json,
    document_to_markdown, table_to_markdown,
)
from tests.pdf_fixtures import SPANNING_HEADER, case1_pdf, case2_pdf


def _box(*values):
    return BoundingBox(*(float(v) for v in values))


BOX = _box(72, 100, 300, 140)


def merged_table(title=None):
    cells = (
        TableCell(0, 0, 1, 1, "Metric"),
        TableCell(0, 1, 1, 2, "Year ended 2021"),
        TableCell(1, 0, 1, 1, "Revenue"),
        TableCell(1, 1, 1, 1, "120"),
        TableCell(1, 2, 1, 1, "135"),
    )
    return Table(cells, 2, 3, BOX, (0,), title)


def sample_document():
    return Document(blocks=(
        Block("page_header", _box(72, 30, 200, 40), 0, 0, "Annual Report"),
        Block("heading", _box(72, 60, 300, 74), 0, 1, "Overview", heading_level=2),
        Block("paragraph", _box(72, 80, 500, 96), 0, 2, "Sales rose\nstrongly."),
        Block("table", BOX, 0, 3, table=merged_table("Table 1: Results")),
        Block("figure_caption", _box(72, 150, 300, 160), 0, 4, "Figure 1: Mix"),
    ), page_count=1, source_id="report")


def random_merged_table(rng, n_rows, n_cols):
    """Tiles an n_rows x n_cols grid with randomly sized merged cells."""
    taken = [[False] * n_cols for _ in range(n_rows)]
    cells = []
    for r in range(n_rows):
        for c in range(n_cols):
            if taken[r][c]:
                continue
            widest = 1
            while c + widest < n_cols and not taken[r][c + widest]:
                widest += 1
            col_span = rng.randint(1, widest)
            tallest = 1
            while r + tallest < n_rows and not any(taken[r + tallest][c:c + col_span]):
                tallest += 1
            row_span = rng.randint(1, tallest)
            for rr in range(r, r + row_span):
                for cc in range(c, c + col_span):
                    taken[rr][cc] = True
            cells.append(TableCell(r, c, row_span, col_span, f"cell {len(cells)}"))
    rng.shuffle(cells)
    return Table(tuple(cells), n_rows, n_cols, BOX, (0,))


def slot_fill(table):
    """Brute force: for every slot, the texts of all cells covering it."""
    return [[[cell.text for cell in table.cells
              if cell.row <= r < cell.row + cell.row_span and cell.col <= c < cell.col + cell.col_span]
             for c in range(table.n_cols)] for r in range(table.n_rows)]


def markdown_rows(markdown):
    lines = markdown.split("\n")
    return [line[2:-2].split(" | ") for line in [lines[0]] + lines[2:]]


class TestMarkdown(unittest.TestCase):
    def test_merged_cell_text_repeats(self):
        rendered = table_to_markdown(merged_table())
        self.assertEqual(rendered.markdown, "\n".join([
            "| Metric | Year ended 2021 | Year ended 2021 |",
            "| --- | --- | --- |",
            "| Revenue | 120 | 135 |",
        ]))
        self.assertEqual(rendered.duplicated_cells, 1)

    def test_title_and_escaping(self):
        cells = (TableCell(0, 0, 1, 1, "a|b"), TableCell(0, 1, 1, 1, "two\nlines"))
        rendered = table_to_markdown(Table(cells, 1, 2, BOX, (0,), "Table 2: Pipes"))
        self.assertEqual(rendered.markdown, "Table 2: Pipes\n| a\\|b | two lines |\n| --- | --- |")

    def test_nine_wide_header_repeats_nine_times(self):
        cells = [TableCell(0, 0, 1, 1, "Metric"), TableCell(0, 1, 1, 9, SPANNING_HEADER)]
        cells += [TableCell(1, c, 1, 1, str(100 + c)) for c in range(10)]
        rendered = table_to_markdown(Table(tuple(cells), 2, 10, BOX, (0,)))
        self.assertEqual(rendered.markdown.count(SPANNING_HEADER), 9)
        self.assertEqual(rendered.duplicated_cells, 8)

    def test_random_merges_match_slot_fill(self):
        rng = random.Random(7)
        for _ in range(300):
            table = random_merged_table(rng, rng.randint(1, 6), rng.randint(1, 6))
            expected = slot_fill(table)
            self.assertTrue(all(len(texts) == 1 for row in expected for texts in row))
            rendered = table_to_markdown(table)
            self.assertEqual(markdown_rows(rendered.markdown), [[t[0] for t in row] for row in expected])
            self.assertEqual(rendered.duplicated_cells, table.n_rows * table.n_cols - len(table.cells))

    def test_invalid_grid(self):
        table = Table((TableCell(0, 0, 1, 1, "only"),), 1, 2, BOX, (0,))
        with self.assertRaises(InvalidTableError):
            table_to_markdown(table)

    def test_block_text(self):
        doc = sample_document()
        self.assertEqual(block_to_text(doc.blocks[0]), "")
        self.assertEqual(block_to_text(doc.blocks[2]), "Sales rose strongly.")

    def test_document_markdown(self):
        md = document_to_markdown(sample_document())
        self.assertTrue(md.startswith("## Overview\n\nSales rose strongly.\n\nTable 1: Results\n| Metric |"))
        self.assertTrue(md.endswith("*Figure 1: Mix*\n"))
        self.assertNotIn("Annual Report", md)


class TestJson(unittest.TestCase):
    def test_canonical_and_lossless(self):
        doc = sample_document()
        raw = document_to_json(doc)
        self.assertTrue(raw.endswith(b"}\n"))
        self.assertEqual(document_from_json(raw), doc)
        self.assertEqual(document_to_json(document_from_json(raw)), raw)
        data = json.loads(raw)
        self.assertEqual(data["blocks"][3]["table"]["cells"][1]["col_span"], 2)
        self.assertNotIn("text", data["blocks"][3])

    def test_schema_error_carries_path(self):
        data = json.loads(document_to_json(sample_document()))
        data["blocks"][2]["order"] = "third"
        with self.assertRaises(DocumentSchemaError) as ctx:
            document_from_json(data)
        self.assertEqual(ctx.exception.path, "blocks[2].order")

    def test_unknown_kind(self):
        data = json.loads(document_to_json(sample_document()))
        data["blocks"][0]["kind"] = "sidebar"
        with self.assertRaises(DocumentSchemaError) as ctx:
            document_from_json(data)
        self.assertEqual(ctx.exception.path, "blocks[0].kind")

    def test_not_json(self):
        with self.assertRaises(DocumentSchemaError) as ctx:
            document_from_json(b"{nope")
        self.assertEqual(ctx.exception.path, "$")

    def test_external_document_without_optional_fields(self):
        data = {"source_id": "ext", "page_count": 1, "blocks": [
            {"kind": "table", "order": 0, "page": 0, "bbox": [0, 0, 10, 10],
             "table": {"n_rows": 1, "n_cols": 1, "cells": [{"row": 0, "col": 0, "text": "x"}]}},
        ]}
        doc = document_from_json(data)
        table = doc.blocks[0].table
        self.assertEqual(table.pages, (0,))
        self.assertEqual(table.bbox, BoundingBox(0, 0, 10, 10))
        self.assertEqual(table.cells[0].row_span, 1)


class TestHtml(unittest.TestCase):
    def test_spans_and_tags(self):
        soup = BeautifulSoup(document_to_html(sample_document()), "lxml")
        self.assertEqual(soup.title.string, "report")
        self.assertEqual(soup.h2.string, "Overview")
        self.assertEqual(soup.find("p", class_="page_header").string, "Annual Report")
        self.assertEqual(soup.table.caption.string, "Table 1: Results")
        header = soup.table.find_all("th")
        self.assertEqual([th.string for th in header], ["Metric", "Year ended 2021"])
        self.assertEqual(header[1]["colspan"], "2")
        self.assertEqual(soup.figure.figcaption.string, "Figure 1: Mix")
        self.assertEqual(soup.figure["data-order"], "4")


class TestParsedFixtures(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.docs = [parse_pdf(case1_pdf(), source_id="case1"), parse_pdf(case2_pdf(), source_id="case2")]

    def test_json_round_trip(self):
        for doc in self.docs:
            raw = document_to_json(doc)
            self.assertEqual(document_from_json(raw), doc)
            self.assertEqual(document_to_json(document_from_json(raw)), raw)

    def test_spanning_header_in_markdown_and_html(self):
        table = next(b.table for b in self.docs[0].blocks if b.kind == "table")
        self.assertEqual(table_to_markdown(table).markdown.count(SPANNING_HEADER), 9)
        soup = BeautifulSoup(document_to_html(self.docs[0]), "lxml")
        spanning = [th for th in soup.find_all("th") if th.string == SPANNING_HEADER]
        self.assertEqual([th["colspan"] for th in spanning], ["9"])

    def test_html_is_well_formed(self):
        for doc in self.docs:
            root = etree.fromstring(document_to_html(doc).encode("utf-8"))
            self.assertEqual(root.tag, "html")
            self.assertEqual([child.tag for child in root], ["head", "body"])
            body = root.find("body")
            self.assertEqual(len(body), len(doc.blocks))
            self.assertEqual(len(body.findall("table")), sum(b.kind == "table" for b in doc.blocks))


class TestChunkFiles(unittest.TestCase):
    def test_chunks_jsonl(self):
        chunks = [Chunk("c1", "text one", 2, {"document": "d", "block_range": [0, 1]}),
                  Chunk("c2", "big table", 2, {"document": "d", "block_range": [2, 2]}, True)]
        with tempfile.TemporaryDirectory() as tmp:
            path = chunks_to_jsonl(chunks, Path(tmp) / "chunks.jsonl")
            self.assertEqual(chunks_from_jsonl(path), chunks)


if __name__ == '__main__':
    unittest.main()

import tempfile
import unittest
from pathlib import Path

from structrag.errors import MalformedRowError
from structrag.utils import get_session, read_jsonl, redact, stable_hash, write_jsonl


class TestUtils(unittest.TestCase):
    def test_session_headers_and_pool(self):
        session = get_session()
        self.assertIn("StructRAG", session.headers["User-Agent"])
        self.assertIn("https://", session.adapters)

    def test_redact_masks_credentials(self):
        headers = {"Authorization": "Bearer sk-abc", "Content-Type": "application/json"}
        body = {"input": ["text"], "api_key": "k", "note": "Bearer sk-xyz.123 leaked"}
        self.assertEqual(redact(headers)["Authorization"], "***")
        self.assertEqual(redact(headers)["Content-Type"], "application/json")
        self.assertEqual(redact(body)["api_key"], "***")
        self.assertEqual(redact(body)["note"], "Bearer *** leaked")
        # the input is not modified
        self.assertEqual(headers["Authorization"], "Bearer sk-abc")

    def test_stable_hash(self):
        self.assertEqual(stable_hash("doc", 1), stable_hash("doc", 1))
        self.assertNotEqual(stable_hash("ab", "c"), stable_hash("a", "bc"))
        self.assertEqual(len(stable_hash("x")), 16)

    def test_jsonl_is_sorted_and_reloadable(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = write_jsonl(Path(tmp) / "sub" / "rows.jsonl", [{"b": 1, "a": "é"}, {"c": None}])
            raw = path.read_text(encoding="utf-8")
            self.assertEqual(raw, '{"a": "é", "b": 1}\n{"c": null}\n')
            self.assertEqual(read_jsonl(path), [{"a": "é", "b": 1}, {"c": None}])

    def test_bad_jsonl_row_names_row_and_line(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "rows.jsonl"
            path.write_text('{"a": 1}\n\n{"a": 2,\n', encoding="utf-8")
            with self.assertRaises(MalformedRowError) as ctx:
                read_jsonl(path)
            self.assertEqual(ctx.exception.row, 2)
            self.assertIn("line 3", str(ctx.exception))

            path.write_text('{"a": 1}\n[1, 2]\n', encoding="utf-8")
            with self.assertRaises(MalformedRowError) as ctx:
                read_jsonl(path)
            self.assertIn("not a JSON object", str(ctx.exception))


if __name__ == '__main__':
    unittest.main()

import hashlib
import json
import logging
import re
from pathlib import Path

import requests

from .config import USER_AGENT
from .errors import MalformedRowError

_SECRET_KEYS = re.compile(r"(authorization|api[_-]?key|x-goog-api-key|token|secret)", re.I)
_BEARER = re.compile(r"Bearer\s+[A-Za-z0-9._\-]+")


def get_session():
    """Returns a configured requests Session."""
    session = requests.Session()
    # Pool sized for the judge/embedding thread pools
    adapter = requests.adapters.HTTPAdapter(pool_connections=32, pool_maxsize=32)
    session.mount("http://", adapter)
    session.mount("https://", adapter)
    session.headers.update({"User-Agent": USER_AGENT})
    return session


def setup_logging(verbose: bool = False):
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def redact(data):
    """Returns a copy of headers/bodies with credentials masked, for audit logs."""
    if isinstance(data, dict):
        return {
            k: ("***" if _SECRET_KEYS.search(str(k)) else redact(v))
            for k, v in data.items()
        }
    if isinstance(data, list):
        return [redact(v) for v in data]
    if isinstance(data, str):
        return _BEARER.sub("Bearer ***", data)
    return data


def stable_hash(*parts) -> str:
    """Short content hash used for chunk ids."""
    h = hashlib.sha1()
    for part in parts:
        h.update(str(part).encode("utf-8"))
        h.update(b"\x1f")
    return h.hexdigest()[:16]


def write_jsonl(path, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for row in rows:
            f.write(json.dumps(row, ensure_ascii=False, sort_keys=True))
            f.write("\n")
    return path


def read_jsonl(path):
    """One dict per non-blank line; a bad line raises MalformedRowError."""
    rows = []
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as e:
                raise MalformedRowError(path, len(rows) + 1, f"invalid JSON on line {line_no}: {e.msg}") from e
            if not isinstance(row, dict):
                raise MalformedRowError(path, len(rows) + 1, f"line {line_no} is not a JSON object")
            rows.append(row)
    return rows

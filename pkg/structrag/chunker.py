"""
The two chunking policies compared by the pipeline.

* baseline (`recursive_split`): separator-driven splitting of flat text,
  the way a recursive character splitter treats raw PDF text;
* structured (`structure_chunk`): parsed blocks are atomic units merged in
  reading order until the token limit.

Both count tokens with the same pluggable scheme so the limit means the
same thing on each side.
"""
import json
import logging
import re
from dataclasses import dataclass, field

from .config import ChunkPolicy
from .doc_model import Document
from .errors import UnknownTokenSchemeError
from .serializer import block_to_text
from .utils import stable_hash

logger = logging.getLogger(__name__)

_WORD_OR_MARK = re.compile(r"\w+|[^\w\s]")
_SENTENCE_END = re.compile(r"(?<=[.!?。！？])\s+")


def _count_words(text: str) -> int:
    return sum(1 for _ in _WORD_OR_MARK.finditer(text))


def _truncate_words(text: str, n: int) -> str:
    if n <= 0:
        return ""
    for i, m in enumerate(_WORD_OR_MARK.finditer(text), start=1):
        if i == n:
            return text[:m.end()]
    return text


_tiktoken_encoding = None


def _encoding():
    global _tiktoken_encoding
    if _tiktoken_encoding is None:
        try:
            import tiktoken
        except ImportError as e:
            raise UnknownTokenSchemeError("token scheme 'tiktoken' needs the tiktoken package") from e
        _tiktoken_encoding = tiktoken.get_encoding("cl100k_base")
    return _tiktoken_encoding


TOKEN_SCHEMES = {
    "words": (_count_words, _truncate_words),
    "chars": (len, lambda text, n: text[:max(n, 0)]),
    "tiktoken": (
        lambda text: len(_encoding().encode(text)),
        lambda text, n: _encoding().decode(_encoding().encode(text)[:max(n, 0)]),
    ),
}


def register_token_scheme(name: str, counter, truncator):
    TOKEN_SCHEMES[name] = (counter, truncator)


def _scheme(name: str):
    try:
        return TOKEN_SCHEMES[name]
    except KeyError:
        raise UnknownTokenSchemeError(f"unknown token scheme {name!r}; known: {sorted(TOKEN_SCHEMES)}") from None


def count_tokens(text: str, scheme: str = "words") -> int:
    """Default scheme: runs of word characters plus each standalone punctuation mark."""
    return _scheme(scheme)[0](text)


def truncate_to_tokens(text: str, n: int, scheme: str = "words") -> str:
    """Longest prefix of `text` ending on a token boundary with at most n tokens."""
    return _scheme(scheme)[1](text, n)


@dataclass
class Chunk:
    id: str
    text: str
    token_count: int
    source: dict = field(default_factory=dict)
    atomic_oversize: bool = False

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "text": self.text,
            "token_count": self.token_count,
            "source": self.source,
            "atomic_oversize": self.atomic_oversize,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Chunk":
        return cls(
            id=data["id"],
            text=data["text"],
            token_count=int(data["token_count"]),
            source=dict(data.get("source") or {}),
            atomic_oversize=bool(data.get("atomic_oversize", False)),
        )

    @property
    def document(self) -> str:
        return self.source.get("document", "")


def _make_chunk(text: str, source: dict, scheme: str, oversize: bool = False) -> Chunk:
    chunk_id = stable_hash(source.get("document", ""), json.dumps(source, sort_keys=True))
    return Chunk(id=chunk_id, text=text, token_count=count_tokens(text, scheme),
                 source=source, atomic_oversize=oversize)


# ------------------------------------------------------------- baseline

def _pieces(text: str, sep: str):
    """Splits after every `sep`, keeping it on the preceding piece."""
    if sep == "":
        return list(text)
    return [p for p in re.split(f"(?<={re.escape(sep)})", text) if p]


def _merge(pieces, policy: ChunkPolicy):
    merged = []
    current = ""
    for piece in pieces:
        if current and count_tokens(current + piece, policy.token_counter) > policy.max_tokens:
            merged.append(current)
            current = piece
        else:
            current += piece
    if current:
        merged.append(current)
    return merged


def _split_text(text: str, separators, policy: ChunkPolicy):
    sep_index = next(i for i, s in enumerate(separators) if s == "" or s in text)
    sep, rest = separators[sep_index], separators[sep_index + 1:]

    out, good = [], []
    for piece in _pieces(text, sep):
        if count_tokens(piece, policy.token_counter) <= policy.max_tokens:
            good.append(piece)
            continue
        if good:
            out.extend(_merge(good, policy))
            good = []
        if rest:
            out.extend(_split_text(piece, rest, policy))
        else:
            out.append(piece)
    if good:
        out.extend(_merge(good, policy))
    return out


def split_text(text: str, policy: ChunkPolicy) -> list[str]:
    """Recursive separator splitting with greedy re-merging; pieces concatenate back to `text`."""
    if not text:
        return []
    if count_tokens(text, policy.token_counter) <= policy.max_tokens:
        return [text]
    return _split_text(text, tuple(policy.separators), policy)


def recursive_split(full_text: str, policy: ChunkPolicy = None, source_id: str = "") -> list[Chunk]:
    """
    Baseline chunking of flat (storage-order) text. The first separator
    present in a piece splits it; oversize pieces recurse with the later
    separators; adjacent pieces then merge while they fit. Separators stay
    attached, so "".join(c.text for c in chunks) == full_text.
    """
    policy = policy or ChunkPolicy()
    chunks = []
    offset = 0
    for text in split_text(full_text, policy):
        source = {"document": source_id, "char_range": [offset, offset + len(text)]}
        chunks.append(_make_chunk(text, source, policy.token_counter))
        offset += len(text)
    return chunks


# ----------------------------------------------------------- structured

def _split_paragraph(text: str, policy: ChunkPolicy) -> list[str]:
    """Sentence-level fallback for a paragraph too long for one chunk."""
    sentences = [s for s in _SENTENCE_END.split(text) if s]
    parts, current = [], ""
    for sentence in sentences:
        if count_tokens(sentence, policy.token_counter) > policy.max_tokens:
            if current:
                parts.append(current)
                current = ""
            parts.extend(p.strip() for p in split_text(sentence, policy) if p.strip())
            continue
        candidate = f"{current} {sentence}" if current else sentence
        if current and count_tokens(candidate, policy.token_counter) > policy.max_tokens:
            parts.append(current)
            current = sentence
        else:
            current = candidate
    if current:
        parts.append(current)
    return parts


def structure_chunk(doc: Document, policy: ChunkPolicy = None) -> list[Chunk]:
    """
    Structure-aware chunking: content blocks (page furniture skipped) are
    never split across chunks except for oversize paragraphs, which fall
    back to sentence seams. A table whose markdown alone exceeds the limit
    becomes a single chunk flagged atomic_oversize.
    """
    policy = policy or ChunkPolicy()
    scheme, limit = policy.token_counter, policy.max_tokens
    chunks = []
    group = []  # (order, text)

    def flush():
        nonlocal group
        if group:
            text = "\n\n".join(t for _, t in group)
            source = {"document": doc.source_id, "block_range": [group[0][0], group[-1][0]]}
            chunks.append(_make_chunk(text, source, scheme))
        group = []

    for block in doc.content_blocks():
        text = block_to_text(block)
        size = count_tokens(text, scheme)
        if size > limit:
            flush()
            if block.kind == "table":
                source = {"document": doc.source_id, "block_range": [block.order, block.order]}
                chunks.append(_make_chunk(text, source, scheme, oversize=True))
                logger.debug("Table block %d is %d tokens, kept whole", block.order, size)
            else:
                for part, piece in enumerate(_split_paragraph(text, policy)):
                    source = {"document": doc.source_id, "block_range": [block.order, block.order], "part": part}
                    chunks.append(_make_chunk(piece, source, scheme))
            continue
        if group:
            candidate = "\n\n".join([t for _, t in group] + [text])
            if count_tokens(candidate, scheme) > limit:
                flush()
        group.append((block.order, text))
    flush()
    return chunks


def chunk_document(mode: str, policy: ChunkPolicy, doc: Document = None, flat_text: str = None,
                   source_id: str = "") -> list[Chunk]:
    """Mode dispatch: "baseline" chunks flat text, "structured" chunks a Document."""
    if mode == "baseline":
        return recursive_split(flat_text or "", policy, source_id=source_id)
    if mode == "structured":
        return structure_chunk(doc, policy)
    raise ValueError(f"unknown mode {mode!r}")

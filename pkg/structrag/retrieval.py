"""
Embedding, exact cosine search and token-budgeted context assembly.

Index file layout (little-endian):

    magic     4 bytes   b"DRIX"
    version   u16       1
    dim       u32
    count     u32
    count x { order u32, id_len u16, id utf-8 bytes }
    count x dim float64 vectors, row-major
"""
import logging
import math
import struct
import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import EMBED_BATCH_SIZE
from .chunker import count_tokens, truncate_to_tokens
from .errors import DimensionMismatchError, MissingArtifactError, ProviderError, StructRagError
from .serializer import chunks_from_jsonl

logger = logging.getLogger(__name__)

INDEX_MAGIC = b"DRIX"
INDEX_VERSION = 1

QA_PROMPT = """You are answering a question about a document. Use only the numbered context passages below. If they do not contain the answer, say so.

Context:
{context}

Question: {question}
Answer:"""

NO_CONTEXT = "(no context retrieved)"


@dataclass(frozen=True)
class RetrievalResult:
    chunk_id: str
    score: float
    rank: int


@dataclass
class Context:
    """Chunks selected for the prompt, in rank order."""

    texts: list = field(default_factory=list)
    chunk_ids: list = field(default_factory=list)
    token_total: int = 0
    truncated: bool = False


@dataclass(frozen=True)
class Answer:
    text: str
    chunk_ids: tuple


def embed(texts, provider) -> list[list[float]]:
    """One vector per text, requested in batches of the provider's batch size."""
    texts = list(texts)
    if not texts:
        return []
    cfg = getattr(provider, "cfg", None)
    batch_size = getattr(cfg, "batch_size", None) or EMBED_BATCH_SIZE
    vectors = []
    dim = None
    for start in range(0, len(texts), batch_size):
        batch = texts[start:start + batch_size]
        got = provider.embed_batch(batch)
        if len(got) != len(batch):
            raise ProviderError(f"provider returned {len(got)} vectors for {len(batch)} texts")
        for v in got:
            if dim is None:
                dim = len(v)
            if len(v) != dim:
                raise DimensionMismatchError(f"embedding dim changed from {dim} to {len(v)}")
            if not all(math.isfinite(x) for x in v):
                raise ProviderError("provider returned a non-finite embedding value")
            vectors.append(list(v))
    logger.debug("Embedded %d text(s) in %d batch(es)", len(texts), math.ceil(len(texts) / batch_size))
    return vectors


class _RWLock:
    """Many concurrent readers or one writer."""

    def __init__(self):
        self._cond = threading.Condition()
        self._readers = 0
        self._writing = False

    @contextmanager
    def read(self):
        with self._cond:
            while self._writing:
                self._cond.wait()
            self._readers += 1
        try:
            yield
        finally:
            with self._cond:
                self._readers -= 1
                if not self._readers:
                    self._cond.notify_all()

    @contextmanager
    def write(self):
        with self._cond:
            while self._writing or self._readers:
                self._cond.wait()
            self._writing = True
        try:
            yield
        finally:
            with self._cond:
                self._writing = False
                self._cond.notify_all()


class VectorIndex:
    """
    Exact cosine search over an in-memory matrix. Ties in score go to the
    chunk that comes first in source order.
    """

    def __init__(self, dim: int = None):
        self.dim = dim
        self._ids = []
        self._orders = []
        self._pos = {}
        self._matrix = np.zeros((0, dim or 0), dtype=np.float64)  # rows past len(self) are spare capacity
        self._lock = _RWLock()

    def __len__(self):
        return len(self._ids)

    @property
    def ids(self):
        return list(self._ids)

    def _vectors(self):
        return self._matrix[:len(self._ids)]

    def upsert(self, chunk_id: str, vector, order: int = None):
        vec = np.asarray(vector, dtype=np.float64)
        with self._lock.write():
            if self.dim is None:
                self.dim = vec.shape[0]
                self._matrix = np.zeros((0, self.dim), dtype=np.float64)
            if vec.ndim != 1 or vec.shape[0] != self.dim:
                raise DimensionMismatchError(f"vector dim {vec.shape[-1] if vec.ndim else 0} != index dim {self.dim}")
            if chunk_id in self._pos:
                i = self._pos[chunk_id]
                self._matrix[i] = vec
                if order is not None:
                    self._orders[i] = order
                return
            n = len(self._ids)
            if n == self._matrix.shape[0]:
                grown = np.zeros((max(16, 2 * n), self.dim), dtype=np.float64)
                grown[:n] = self._matrix[:n]
                self._matrix = grown
            self._matrix[n] = vec
            self._pos[chunk_id] = n
            self._ids.append(chunk_id)
            self._orders.append(n if order is None else order)

    def query(self, vector, k: int, allowed=None) -> list[RetrievalResult]:
        q = np.asarray(vector, dtype=np.float64)
        with self._lock.read():
            if not self._ids or k <= 0:
                return []
            if q.ndim != 1 or q.shape[0] != self.dim:
                raise DimensionMismatchError(f"query dim {q.shape[-1] if q.ndim else 0} != index dim {self.dim}")
            vectors = self._vectors()
            norms = np.linalg.norm(vectors, axis=1) * np.linalg.norm(q)
            dots = vectors @ q
            scores = np.divide(dots, norms, out=np.zeros_like(dots), where=norms > 0)
            scores = np.clip(scores, -1.0, 1.0)
            orders = np.asarray(self._orders)
            ranking = np.lexsort((orders, -scores))
            ids = list(self._ids)
        results = []
        for i in ranking:
            if allowed is not None and ids[i] not in allowed:
                continue
            results.append(RetrievalResult(ids[i], float(scores[i]), len(results) + 1))
            if len(results) == k:
                break
        return results

    def save(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with self._lock.read():
            dim = self.dim or 0
            parts = [INDEX_MAGIC, struct.pack("<HII", INDEX_VERSION, dim, len(self._ids))]
            for chunk_id, order in zip(self._ids, self._orders):
                raw = chunk_id.encode("utf-8")
                parts.append(struct.pack("<IH", order, len(raw)))
                parts.append(raw)
            parts.append(self._vectors().astype("<f8").tobytes())
        path.write_bytes(b"".join(parts))
        return path

    @classmethod
    def load(cls, path) -> "VectorIndex":
        path = Path(path)
        if not path.exists():
            raise MissingArtifactError(path)
        data = path.read_bytes()
        if data[:4] != INDEX_MAGIC:
            raise StructRagError(f"{path}: not an index file")
        version, dim, count = struct.unpack_from("<HII", data, 4)
        if version != INDEX_VERSION:
            raise StructRagError(f"{path}: unsupported index version {version}")
        offset = 4 + struct.calcsize("<HII")
        index = cls(dim or None)
        for _ in range(count):
            order, n = struct.unpack_from("<IH", data, offset)
            offset += struct.calcsize("<IH")
            chunk_id = data[offset:offset + n].decode("utf-8")
            offset += n
            index._pos[chunk_id] = len(index._ids)
            index._ids.append(chunk_id)
            index._orders.append(order)
        matrix = np.frombuffer(data, dtype="<f8", count=count * dim, offset=offset)
        index._matrix = matrix.reshape(count, dim).astype(np.float64) if dim else np.zeros((count, 0))
        return index


def index_upsert(index: VectorIndex, chunk_id: str, vector, order: int = None):
    index.upsert(chunk_id, vector, order)


def index_query(index: VectorIndex, query_vector, k: int) -> list[RetrievalResult]:
    return index.query(query_vector, k)


class ChunkStore:
    """Chunks by id, remembering source order."""

    def __init__(self, chunks=()):
        self._chunks = {}
        for chunk in chunks:
            self.add(chunk)

    def add(self, chunk):
        self._chunks.setdefault(chunk.id, chunk)

    def __getitem__(self, chunk_id):
        return self._chunks[chunk_id]

    def __contains__(self, chunk_id):
        return chunk_id in self._chunks

    def __len__(self):
        return len(self._chunks)

    def __iter__(self):
        return iter(self._chunks.values())

    def ids_for_document(self, document_ref: str) -> set:
        return {c.id for c in self._chunks.values() if c.document == document_ref}

    @classmethod
    def load(cls, path) -> "ChunkStore":
        if not Path(path).exists():
            raise MissingArtifactError(path)
        return cls(chunks_from_jsonl(path))


def build_index(chunks, provider) -> VectorIndex:
    chunks = list(chunks)
    index = VectorIndex()
    for order, (chunk, vector) in enumerate(zip(chunks, embed([c.text for c in chunks], provider))):
        index.upsert(chunk.id, vector, order)
    return index


def assemble_context(results, chunks, budget_tokens: int, scheme: str = "words") -> Context:
    """
    Greedy fill in rank order: a chunk goes in iff it still fits the budget.
    A top-ranked chunk that alone exceeds the budget is cut at a token
    boundary, flagged, and becomes the whole context.
    """
    context = Context()
    if budget_tokens <= 0:
        return context
    for i, result in enumerate(results):
        chunk = chunks[result.chunk_id]
        if context.token_total + chunk.token_count <= budget_tokens:
            context.texts.append(chunk.text)
            context.chunk_ids.append(chunk.id)
            context.token_total += chunk.token_count
        elif i == 0:
            text = truncate_to_tokens(chunk.text, budget_tokens, scheme)
            context.texts.append(text)
            context.chunk_ids.append(chunk.id)
            context.token_total = count_tokens(text, scheme)
            context.truncated = True
            logger.info("Top chunk %s (%d tokens) truncated to the %d-token budget",
                        chunk.id, chunk.token_count, budget_tokens)
            break
    return context


def build_prompt(question: str, texts) -> str:
    if texts:
        body = "\n\n".join(f"[{i}] {t}" for i, t in enumerate(texts, start=1))
    else:
        body = NO_CONTEXT
    return QA_PROMPT.format(context=body, question=question)


def answer(question: str, context: Context, provider) -> Answer:
    text = provider.complete(build_prompt(question, context.texts))
    return Answer(text=text, chunk_ids=tuple(context.chunk_ids))


def retrieve(question: str, index: VectorIndex, store: ChunkStore, provider, k: int, budget_tokens: int,
             scheme: str = "words", document_ref: str = None) -> tuple[list[RetrievalResult], Context]:
    """Embeds the question with the chunk provider, searches, and assembles the context."""
    if len(index) == 0:
        return [], Context()
    allowed = store.ids_for_document(document_ref) if document_ref else None
    query = embed([question], provider)[0]
    results = index.query(query, k, allowed=allowed)
    return results, assemble_context(results, store, budget_tokens, scheme)

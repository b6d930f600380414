"""
Embedding and chat providers.

Every provider exposes one of two small interfaces:

    embed_batch(texts) -> list[list[float]]
    complete(prompt) -> str

HTTP providers talk to OpenAI-compatible endpoints through the shared
requests session; Gemini providers go through google-generativeai. The
mocks are deterministic and are what the tests and offline runs use.
"""
import hashlib
import logging
import re
import threading

import google.generativeai as genai
import numpy as np
import requests
from tenacity import RetryError, Retrying, retry_if_exception_type, stop_after_attempt, wait_exponential

from .config import ProviderConfig
from .errors import ProviderAuthError, ProviderError, RetriesExhaustedError, TransientProviderError
from .utils import get_session, redact

logger = logging.getLogger(__name__)

TRANSIENT_STATUS = {408, 409, 425, 429, 500, 502, 503, 504}


def call_with_retry(fn, cfg: ProviderConfig, what: str):
    """Runs fn() retrying TransientProviderError with exponential backoff."""
    retryer = Retrying(
        stop=stop_after_attempt(cfg.max_attempts),
        wait=wait_exponential(multiplier=cfg.backoff_base, max=cfg.backoff_max),
        retry=retry_if_exception_type(TransientProviderError),
        reraise=False,
    )
    try:
        return retryer(fn)
    except RetryError as e:
        attempts = e.last_attempt.attempt_number
        cause = e.last_attempt.exception()
        raise RetriesExhaustedError(f"{what} failed after {attempts} attempt(s): {cause}", attempts) from cause


class _HTTPProvider:
    def __init__(self, cfg: ProviderConfig, session=None):
        self.cfg = cfg
        self.model = cfg.model
        self.session = session or get_session()

    def _headers(self):
        key = self.cfg.resolve_api_key()
        if not key:
            raise ProviderAuthError(f"no credential in ${self.cfg.api_key_env}")
        return {"Authorization": f"Bearer {key}", "Content-Type": "application/json"}

    def _post(self, path: str, body: dict) -> dict:
        url = self.cfg.endpoint.rstrip("/") + path
        headers = self._headers()

        def attempt():
            logger.debug("POST %s headers=%s body=%s", url, redact(headers), redact(body))
            try:
                resp = self.session.post(url, json=body, headers=headers, timeout=self.cfg.timeout)
            except (requests.ConnectionError, requests.Timeout) as e:
                raise TransientProviderError(f"transport error: {e}") from e
            if resp.status_code in (401, 403):
                raise ProviderAuthError(f"{url} rejected credentials (HTTP {resp.status_code})")
            if resp.status_code in TRANSIENT_STATUS:
                raise TransientProviderError(f"{url} returned HTTP {resp.status_code}")
            if resp.status_code >= 400:
                raise ProviderError(f"{url} returned HTTP {resp.status_code}: {resp.text[:200]}")
            data = resp.json()
            logger.debug("Response %s: %s", url, redact(data))
            return data

        return call_with_retry(attempt, self.cfg, f"POST {path}")


class OpenAIEmbeddingProvider(_HTTPProvider):
    def embed_batch(self, texts):
        data = self._post("/embeddings", {"model": self.model, "input": list(texts)})
        rows = sorted(data.get("data", []), key=lambda d: d.get("index", 0))
        if len(rows) != len(texts):
            raise ProviderError(f"expected {len(texts)} embeddings, got {len(rows)}")
        return [list(map(float, r["embedding"])) for r in rows]


class OpenAIChatProvider(_HTTPProvider):
    def complete(self, prompt: str) -> str:
        body = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0,
        }
        data = self._post("/chat/completions", body)
        try:
            return data["choices"][0]["message"]["content"] or ""
        except (KeyError, IndexError, TypeError) as e:
            raise ProviderError(f"malformed chat response: {e}") from e


def _gemini_error(e: Exception) -> Exception:
    name = type(e).__name__
    if name in ("PermissionDenied", "Unauthenticated"):
        return ProviderAuthError(f"Gemini rejected credentials: {e}")
    if name in ("ResourceExhausted", "ServiceUnavailable", "DeadlineExceeded", "InternalServerError", "TooManyRequests"):
        return TransientProviderError(f"Gemini transient error: {e}")
    return ProviderError(f"Gemini error: {e}")


class _GeminiProvider:
    def __init__(self, cfg: ProviderConfig):
        self.cfg = cfg
        self.model = cfg.model
        key = cfg.resolve_api_key()
        if not key:
            raise ProviderAuthError(f"no credential in ${cfg.api_key_env}")
        genai.configure(api_key=key)

    def _call(self, fn, what):
        def attempt():
            try:
                return fn()
            except ProviderError:
                raise
            except Exception as e:
                raise _gemini_error(e) from e
        return call_with_retry(attempt, self.cfg, what)


class GeminiEmbeddingProvider(_GeminiProvider):
    def embed_batch(self, texts):
        result = self._call(lambda: genai.embed_content(model=self.model, content=list(texts)), "Gemini embed")
        vectors = result["embedding"]
        if texts and vectors and not isinstance(vectors[0], (list, tuple)):
            vectors = [vectors]
        return [list(map(float, v)) for v in vectors]


class GeminiChatProvider(_GeminiProvider):
    def __init__(self, cfg: ProviderConfig):
        super().__init__(cfg)
        self._model = genai.GenerativeModel(self.model, generation_config={"temperature": 0})

    def complete(self, prompt: str) -> str:
        response = self._call(lambda: self._model.generate_content(prompt), "Gemini generate")
        return (response.text or "").strip()


# ---------------------------------------------------------------- mocks

class HashEmbeddingProvider:
    """Deterministic unit vectors seeded from a hash of the text."""

    def __init__(self, dim: int = 64, batch_size: int = 100):
        self.dim = dim
        self.model = f"hash-{dim}"
        self.cfg = ProviderConfig(kind="mock", model=self.model, dim=dim, batch_size=batch_size)
        self.calls = 0
        self._lock = threading.Lock()

    def _vector(self, text: str):
        seed = int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "little")
        v = np.random.default_rng(seed).standard_normal(self.dim)
        return (v / np.linalg.norm(v)).tolist()

    def embed_batch(self, texts):
        with self._lock:
            self.calls += 1
        return [self._vector(t) for t in texts]


class EchoChatProvider:
    """Returns the prompt unchanged."""

    model = "echo"

    def complete(self, prompt: str) -> str:
        return prompt


class CannedChatProvider:
    def __init__(self, text: str):
        self.text = text
        self.model = "canned"

    def complete(self, prompt: str) -> str:
        return self.text


class ScriptedChatProvider:
    """
    Replays responses in call order, or computes them with a callable
    `script(prompt) -> str`. Records every prompt it receives.
    """

    model = "scripted"

    def __init__(self, script):
        self._script = script if callable(script) else list(script)
        self._lock = threading.Lock()
        self.prompts = []

    def complete(self, prompt: str) -> str:
        with self._lock:
            self.prompts.append(prompt)
            if callable(self._script):
                return self._script(prompt)
            if not self._script:
                raise ProviderError("scripted provider ran out of responses")
            return self._script.pop(0)


_WORD = re.compile(r"\w+")
_SECTION = re.compile(r"\[(Question|Candidate A|Candidate B)\]\n(.*?)(?=\n\[(?:Question|Candidate A|Candidate B|Instructions)\]|\Z)", re.S)


class OverlapJudgeProvider:
    """
    Offline stand-in for a judge model: scores each candidate by the share of
    question words it contains (0-10). Insensitive to presentation order.
    """

    model = "overlap-judge"

    def complete(self, prompt: str) -> str:
        sections = {name: body for name, body in _SECTION.findall(prompt)}
        question = set(w.lower() for w in _WORD.findall(sections.get("Question", "")))

        def score(name):
            if not question:
                return 0.0
            words = set(w.lower() for w in _WORD.findall(sections.get(name, "")))
            return round(10 * len(question & words) / len(question), 1)

        return f"score_a={score('Candidate A')}; score_b={score('Candidate B')}"


def make_embedding_provider(cfg: ProviderConfig):
    if cfg.kind == "openai":
        return OpenAIEmbeddingProvider(cfg)
    if cfg.kind == "gemini":
        return GeminiEmbeddingProvider(cfg)
    return HashEmbeddingProvider(cfg.dim, cfg.batch_size)


def make_chat_provider(cfg: ProviderConfig, role: str = "chat"):
    """role is "chat" or "judge"; it only matters for the mock kind."""
    if cfg.kind == "openai":
        return OpenAIChatProvider(cfg)
    if cfg.kind == "gemini":
        return GeminiChatProvider(cfg)
    return OverlapJudgeProvider() if role == "judge" else EchoChatProvider()

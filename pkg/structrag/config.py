import json
import os
from pathlib import Path
from typing import Literal, Optional

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigError


# Configuration Constants

USER_AGENT = "Mozilla/5.0 (compatible; StructRAG/1.0; +https://example.com/bot)"
TIMEOUT = 30
MAX_RETRY_ATTEMPTS = 4
BACKOFF_BASE_S = 1.0
BACKOFF_MAX_S = 20.0

DEFAULT_MAX_TOKENS = 300          # per chunk, both systems
DEFAULT_SEPARATORS = ("\n\n", ".\n", "\n", " ", "")
DEFAULT_TOKEN_SCHEME = "words"
DEFAULT_RETRIEVAL_BUDGET = 3000   # tokens of assembled context
DEFAULT_TOP_K = 10

DEFAULT_EMBED_MODEL = "text-embedding-ada-002"
DEFAULT_CHAT_MODEL = "gpt-3.5-turbo"
DEFAULT_JUDGE_MODEL = "gpt-4"
DEFAULT_OPENAI_ENDPOINT = "https://api.openai.com/v1"
EMBED_BATCH_SIZE = 100
MOCK_EMBED_DIM = 64

TIE_MARGIN_HUMAN = 0.0
TIE_MARGIN_JUDGE = 0.25
# Integer score bins 0..10, each centred on its integer.
DEFAULT_BIN_EDGES = tuple(x - 0.5 for x in range(12))
JUDGE_PARALLELISM = 4
# Extractive questions are scored by annotators unless judging is asked for.
JUDGED_CATEGORIES = ("comprehensive",)

MODES = ("baseline", "structured")


class LayoutConfig(BaseModel):
    """Geometric thresholds for the rule-based layout parser."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    line_merge_tolerance: float = Field(0.5, gt=0, le=1)   # fraction of font size
    column_gap_min: float = Field(18.0, gt=0)              # points
    para_gap_factor: float = Field(1.4, gt=0)              # multiple of line height
    ruling_min_length: float = Field(0.5, gt=0, le=1)      # fraction of table width
    header_footer_band: float = Field(0.08, gt=0, le=1)    # fraction of page height
    header_footer_repeat_min: float = Field(0.5, gt=0, le=1)
    alignment_cluster_tolerance: float = Field(4.0, gt=0)  # points
    word_gap_factor: float = Field(0.2, gt=0, le=1)
    table_cell_max_words: int = Field(4, gt=0)
    rule_gap_max: float = Field(150.0, gt=0)


class ChunkPolicy(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    max_tokens: int = Field(DEFAULT_MAX_TOKENS, ge=1)
    separators: tuple[str, ...] = DEFAULT_SEPARATORS
    token_counter: str = DEFAULT_TOKEN_SCHEME

    @field_validator("separators")
    @classmethod
    def _ends_with_char_fallback(cls, value):
        if not value or value[-1] != "":
            raise ValueError('separators must end with "" (character fallback)')
        return value


class ProviderConfig(BaseModel):
    """One embedding or chat endpoint. The credential is read from `api_key_env`."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["openai", "gemini", "mock"] = "mock"
    model: str = DEFAULT_CHAT_MODEL
    endpoint: str = DEFAULT_OPENAI_ENDPOINT
    api_key_env: str = "STRUCTRAG_CHAT_API_KEY"
    batch_size: int = Field(EMBED_BATCH_SIZE, ge=1)
    max_attempts: int = Field(MAX_RETRY_ATTEMPTS, ge=1)
    backoff_base: float = Field(BACKOFF_BASE_S, ge=0)
    backoff_max: float = Field(BACKOFF_MAX_S, ge=0)
    timeout: float = Field(TIMEOUT, gt=0)
    dim: int = Field(MOCK_EMBED_DIM, ge=1)

    def resolve_api_key(self) -> Optional[str]:
        load_dotenv()
        return os.environ.get(self.api_key_env) or None


def _default_embedding():
    return ProviderConfig(model=DEFAULT_EMBED_MODEL, api_key_env="STRUCTRAG_EMBED_API_KEY")


def _default_judge():
    return ProviderConfig(model=DEFAULT_JUDGE_MODEL, api_key_env="STRUCTRAG_JUDGE_API_KEY")


class RunConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    inputs: tuple[Path, ...] = ()
    mode: Literal["baseline", "structured"] = "structured"
    policy: ChunkPolicy = ChunkPolicy()
    layout: LayoutConfig = LayoutConfig()
    embedding: ProviderConfig = Field(default_factory=_default_embedding)
    chat: ProviderConfig = ProviderConfig()
    judge: ProviderConfig = Field(default_factory=_default_judge)
    output_dir: Path = Path("out")
    top_k: int = Field(DEFAULT_TOP_K, ge=1)
    budget_tokens: int = Field(DEFAULT_RETRIEVAL_BUDGET, ge=0)
    tie_margin_human: float = Field(TIE_MARGIN_HUMAN, ge=0)
    tie_margin_judge: float = Field(TIE_MARGIN_JUDGE, ge=0)
    bin_edges: tuple[float, ...] = DEFAULT_BIN_EDGES
    judge_parallelism: int = Field(JUDGE_PARALLELISM, ge=1)
    jobs: int = Field(1, ge=1)

    @model_validator(mode="after")
    def _ascending_bins(self):
        edges = self.bin_edges
        if len(edges) < 2 or any(b <= a for a, b in zip(edges, edges[1:])):
            raise ValueError("bin_edges must hold at least two strictly ascending values")
        return self


def _find_api_key(data, path="$"):
    if isinstance(data, dict):
        for key, value in data.items():
            if key == "api_key":
                return f"{path}.{key}"
            found = _find_api_key(value, f"{path}.{key}")
            if found:
                return found
    elif isinstance(data, list):
        for i, value in enumerate(data):
            found = _find_api_key(value, f"{path}[{i}]")
            if found:
                return found
    return None


def load_run_config(path=None, **overrides) -> RunConfig:
    """
    Builds a RunConfig from an optional JSON file plus keyword overrides
    (CLI flags). Credentials are never accepted from the file.
    """
    data = {}
    if path:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"Cannot read config {path}: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"Config {path} must hold a JSON object")
        leaked = _find_api_key(data)
        if leaked:
            raise ConfigError(f"{leaked}: credentials belong in environment variables, not the config file")
    data.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        where = ".".join(str(p) for p in first["loc"]) or "$"
        raise ConfigError(f"{where}: {first['msg']}") from e

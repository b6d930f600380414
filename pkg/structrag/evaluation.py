"""
Paired evaluation of two pipelines.

Each question is answered by system A (structured) and system B
(baseline). Extractive questions are scored by human annotators (ingested
from a file); comprehensive questions by an LLM judge that sees every pair
four times, twice in each presentation order, so a judge that favours the
first position cancels out.
"""
import dataclasses
import logging
import re
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, ValidationError

from .config import DEFAULT_BIN_EDGES, JUDGE_PARALLELISM, JUDGED_CATEGORIES, TIE_MARGIN_HUMAN, TIE_MARGIN_JUDGE
from .errors import AnnotationError, MalformedRowError, ProviderError, QuestionFileError, UnscoredRecordError
from .reporter import write_report
from .utils import read_jsonl

logger = logging.getLogger(__name__)

CATEGORIES = ("extractive", "comprehensive")
CATEGORY_LABELS = {
    "extractive": "Extractive Questions",
    "comprehensive": "Comprehensive Questions",
    "summary": "Summary",
}

JUDGE_PROMPT = """You are comparing two retrieval-augmented systems on the same question.

[Question]
{question}
[Candidate A]
{candidate_a}
[Candidate B]
{candidate_b}
[Instructions]
Rate each candidate from 0 to 10 for how well it supports a correct and complete answer to the question.
Reply with exactly one line in this format and nothing else:
score_a=<number>; score_b=<number>"""

REPROMPT_SUFFIX = "\n\nYour previous reply could not be read. Reply with exactly one line: score_a=<number>; score_b=<number>"

_SCORE_LINE = re.compile(r"score_a\s*=\s*(-?\d+(?:\.\d+)?)\s*;\s*score_b\s*=\s*(-?\d+(?:\.\d+)?)", re.I)

# (first shown, second shown) per judge call
JUDGE_ORDERS = (("a", "b"), ("a", "b"), ("b", "a"), ("b", "a"))


@dataclass(frozen=True)
class EvalQuestion:
    id: str
    document_ref: str
    text: str
    category: str


@dataclass(frozen=True)
class EvalRecord:
    question_id: str
    category: str
    question: str
    system_a: str
    system_b: str
    retrieved_a: str
    retrieved_b: str
    answer_a: Optional[str] = None
    answer_b: Optional[str] = None
    score_a: Optional[float] = None
    score_b: Optional[float] = None
    score_source: Optional[str] = None
    unscored_reason: Optional[str] = None

    @property
    def scored(self) -> bool:
        return self.score_a is not None and self.score_b is not None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "EvalRecord":
        names = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in names})


@dataclass
class ScoreMatrix:
    """counts[i][j]: questions with system-A score in bin i and system-B score in bin j."""

    bin_edges: tuple
    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def labels(self) -> list[str]:
        return [f"{lo:g}..{hi:g}" for lo, hi in zip(self.bin_edges, self.bin_edges[1:])]


@dataclass(frozen=True)
class OutcomeRow:
    label: str
    total: int
    wins: int
    ties: int
    losses: int

    @property
    def win_pct(self) -> int:
        return percent(self.wins, self.total)

    @property
    def tie_pct(self) -> int:
        return percent(self.ties, self.total)

    @property
    def loss_pct(self) -> int:
        return percent(self.losses, self.total)


@dataclass
class Aggregates:
    rows: list = field(default_factory=list)
    matrices: dict = field(default_factory=dict)
    records: list = field(default_factory=list)
    outcomes: list = field(default_factory=list)
    system_a: str = "System A"
    system_b: str = "System B"


# ----------------------------------------------------------- questions

class _QuestionRow(BaseModel):
    model_config = ConfigDict(extra="ignore", str_strip_whitespace=True)

    id: str
    document_ref: str
    text: str
    category: Literal["extractive", "comprehensive"]


def _read_table(path: Path) -> list[dict]:
    suffix = path.suffix.lower()
    if suffix in (".jsonl", ".json"):
        return read_jsonl(path)
    if suffix in (".xlsx", ".xls"):
        df = pd.read_excel(path, dtype=str, engine="openpyxl").fillna("")
        return df.to_dict(orient="records")
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        return []
    return df.to_dict(orient="records")


def load_questions(path) -> list[EvalQuestion]:
    """
    Reads a CSV or JSON-lines question file with columns
    id, document_ref, text, category. Row numbers in errors are 1-based
    data rows (the CSV header is not counted).
    """
    path = Path(path)
    try:
        rows = _read_table(path)
    except MalformedRowError as e:
        raise QuestionFileError(e.row, e.detail) from e
    questions = []
    seen = set()
    for row_no, row in enumerate(rows, start=1):
        try:
            q = _QuestionRow.model_validate({k: ("" if v is None else str(v)) for k, v in row.items()})
        except ValidationError as e:
            first = e.errors()[0]
            where = ".".join(str(p) for p in first["loc"])
            raise QuestionFileError(row_no, f"{where}: {first['msg']} (got {first.get('input')!r})") from e
        if not q.id:
            raise QuestionFileError(row_no, "id must not be empty")
        if q.id in seen:
            raise QuestionFileError(row_no, f"duplicate question id {q.id!r}")
        seen.add(q.id)
        questions.append(EvalQuestion(q.id, q.document_ref, q.text, q.category))
    logger.info("Loaded %d question(s) from %s", len(questions), path)
    return questions


# --------------------------------------------------------------- judge

def candidate_text(record: EvalRecord, side: str) -> str:
    """What the judge sees for one system: retrieved content, plus the answer for extractive questions."""
    retrieved = record.retrieved_a if side == "a" else record.retrieved_b
    answer = record.answer_a if side == "a" else record.answer_b
    text = f"Retrieved content:\n{retrieved or '(empty)'}"
    if record.category == "extractive" and answer is not None:
        text += f"\n\nAnswer:\n{answer}"
    return text


def parse_judge_reply(reply: str):
    """(score_a, score_b) from a judge reply, or None if unreadable or out of [0, 10]."""
    m = _SCORE_LINE.search(reply or "")
    if not m:
        return None
    a, b = float(m.group(1)), float(m.group(2))
    if not (0 <= a <= 10 and 0 <= b <= 10):
        return None
    return a, b


def _ask_judge(judge, prompt: str):
    parsed = parse_judge_reply(judge.complete(prompt))
    if parsed is None:
        parsed = parse_judge_reply(judge.complete(prompt + REPROMPT_SUFFIX))
    return parsed


def judge_pair(record: EvalRecord, judge) -> EvalRecord:
    """
    Four judge calls: (A,B), (A,B), (B,A), (B,A). Scores from flipped calls
    are swapped back before averaging. A reply still unreadable after one
    re-prompt leaves the record unscored with a reason.
    """
    texts = {"a": candidate_text(record, "a"), "b": candidate_text(record, "b")}
    scores = {"a": [], "b": []}
    for first, second in JUDGE_ORDERS:
        prompt = JUDGE_PROMPT.format(question=record.question, candidate_a=texts[first], candidate_b=texts[second])
        parsed = _ask_judge(judge, prompt)
        if parsed is None:
            logger.warning("Judge output unreadable for question %s", record.question_id)
            return dataclasses.replace(record, score_a=None, score_b=None, score_source=None,
                                       unscored_reason="unparseable judge output")
        scores[first].append(parsed[0])
        scores[second].append(parsed[1])
    return dataclasses.replace(
        record,
        score_a=sum(scores["a"]) / len(scores["a"]),
        score_b=sum(scores["b"]) / len(scores["b"]),
        score_source="judge",
        unscored_reason=None,
    )


def judge_records(records, judge, parallelism: int = JUDGE_PARALLELISM, only_unscored: bool = True,
                  categories=JUDGED_CATEGORIES) -> list[EvalRecord]:
    """
    Judges records of the given categories concurrently; output order
    matches input order. Other records pass through untouched.
    """
    records = list(records)
    out = list(records)
    todo = [i for i, r in enumerate(records)
            if r.category in categories and not (only_unscored and r.scored)]
    with ThreadPoolExecutor(max_workers=max(1, parallelism)) as executor:
        futures = {executor.submit(judge_pair, records[i], judge): i for i in todo}
        for future in as_completed(futures):
            i = futures[future]
            try:
                out[i] = future.result()
            except ProviderError as e:
                logger.error("Judge failed for question %s: %s", records[i].question_id, e)
                out[i] = dataclasses.replace(records[i], unscored_reason=f"judge error: {e}")
    return out


# ------------------------------------------------------- human scores

def _int_score(value, row_no: int, column: str) -> int:
    try:
        number = float(value)
    except (TypeError, ValueError):
        raise AnnotationError(f"row {row_no}: {column} {value!r} is not a number") from None
    if not number.is_integer():
        raise AnnotationError(f"row {row_no}: {column} {value!r} is not an integer")
    if not 0 <= number <= 10:
        raise AnnotationError(f"row {row_no}: {column} {value!r} outside [0, 10]")
    return int(number)


def ingest_human_scores(records, path) -> list[EvalRecord]:
    """
    Attaches annotator scores (columns question_id, score_a, score_b; CSV,
    XLSX or JSON-lines). One row scores both systems for a question.
    """
    by_id = {r.question_id: i for i, r in enumerate(records)}
    out = list(records)
    try:
        rows = _read_table(Path(path))
    except MalformedRowError as e:
        raise AnnotationError(f"row {e.row}: {e.detail}") from e
    first_row = {}
    for row_no, row in enumerate(rows, start=1):
        qid = str(row.get("question_id", "")).strip()
        if qid not in by_id:
            raise AnnotationError(f"row {row_no}: unknown question id {qid!r}")
        if qid in first_row:
            raise AnnotationError(f"row {row_no}: question id {qid!r} already scored on row {first_row[qid]}")
        first_row[qid] = row_no
        a = _int_score(row.get("score_a"), row_no, "score_a")
        b = _int_score(row.get("score_b"), row_no, "score_b")
        i = by_id[qid]
        out[i] = dataclasses.replace(out[i], score_a=float(a), score_b=float(b), score_source="human",
                                     unscored_reason=None)
    return out


# ----------------------------------------------------------- aggregate

def percent(count: int, total: int) -> int:
    """Whole percentage, halves rounded up."""
    if total <= 0:
        return 0
    return (200 * count + total) // (2 * total)


def outcome(record: EvalRecord, tie_margin_human: float = TIE_MARGIN_HUMAN,
            tie_margin_judge: float = TIE_MARGIN_JUDGE) -> str:
    margin = tie_margin_human if record.score_source == "human" else tie_margin_judge
    diff = record.score_a - record.score_b
    if diff > margin:
        return "win"
    if diff < -margin:
        return "loss"
    return "tie"


def score_matrix(records, bin_edges=DEFAULT_BIN_EDGES) -> ScoreMatrix:
    edges = np.asarray(bin_edges, dtype=float)
    n = len(edges) - 1
    counts = np.zeros((n, n), dtype=int)
    for r in records:
        i = int(np.clip(np.searchsorted(edges, r.score_a, side="right") - 1, 0, n - 1))
        j = int(np.clip(np.searchsorted(edges, r.score_b, side="right") - 1, 0, n - 1))
        counts[i, j] += 1
    return ScoreMatrix(bin_edges=tuple(float(e) for e in edges), counts=counts)


def _row(label, records, margins) -> OutcomeRow:
    results = [outcome(r, *margins) for r in records]
    return OutcomeRow(label, len(results), results.count("win"), results.count("tie"), results.count("loss"))


def aggregate(records, tie_margin_human: float = TIE_MARGIN_HUMAN, tie_margin_judge: float = TIE_MARGIN_JUDGE,
              bin_edges=DEFAULT_BIN_EDGES) -> Aggregates:
    """Win/tie/loss per category plus a summary row, and a score matrix for each."""
    records = list(records)
    unscored = [r.question_id for r in records if not r.scored]
    if unscored:
        raise UnscoredRecordError(f"{len(unscored)} unscored record(s), first: {unscored[0]}")
    margins = (tie_margin_human, tie_margin_judge)
    agg = Aggregates(records=records, outcomes=[outcome(r, *margins) for r in records])
    if records:
        agg.system_a, agg.system_b = records[0].system_a, records[0].system_b
    for category in CATEGORIES:
        subset = [r for r in records if r.category == category]
        agg.rows.append(_row(CATEGORY_LABELS[category], subset, margins))
        agg.matrices[category] = score_matrix(subset, bin_edges)
    agg.rows.append(_row(CATEGORY_LABELS["summary"], records, margins))
    agg.matrices["summary"] = score_matrix(records, bin_edges)
    return agg


def report(aggregates: Aggregates, path):
    """Writes the report bundle: scores.csv, summary.md, matrix_<category>.csv, report.xlsx."""
    return write_report(aggregates, path)

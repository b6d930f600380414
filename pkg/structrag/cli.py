"""
Command line: parse -> chunk -> index -> ask / eval -> report.

Stages hand over through files under <out>/<mode>/ so every step can be
inspected and re-run on its own:

    <stem>.doc.json      parse, structured mode
    <stem>.txt           parse, baseline mode (storage-order flat text)
    <stem>.chunks.jsonl  chunk
    chunks.jsonl         index (all documents, in file-name order)
    index.bin            index
    <out>/eval/records.jsonl
    <out>/report/
"""
import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .chunker import recursive_split, structure_chunk
from .config import JUDGED_CATEGORIES, MODES, load_run_config
from .doc_model import validate_document
from .errors import (
    DocumentSchemaError, MalformedRowError, MissingArtifactError, StructRagError, UnsupportedInputError,
)
from .evaluation import (
    EvalRecord, aggregate, ingest_human_scores, judge_records, load_questions, report,
)
from .layout_parser import parse_pdf_pages
from .overlay import write_overlays
from .pdf_reader import extract_flat_text
from .providers import make_chat_provider, make_embedding_provider
from .retrieval import ChunkStore, VectorIndex, answer, build_index, retrieve
from .serializer import chunks_from_jsonl, chunks_to_jsonl, document_from_json, document_to_json
from .utils import read_jsonl, setup_logging, write_jsonl

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_FAILURE, EXIT_UNSUPPORTED, EXIT_MISSING = 0, 1, 2, 3

DOC_SUFFIX = ".doc.json"
TEXT_SUFFIX = ".txt"
CHUNKS_SUFFIX = ".chunks.jsonl"


def _stem(path: Path) -> str:
    name = path.name
    for suffix in (DOC_SUFFIX, CHUNKS_SUFFIX):
        if name.endswith(suffix):
            return name[:-len(suffix)]
    return path.stem


def _mode_dir(cfg, mode=None) -> Path:
    return Path(cfg.output_dir) / (mode or cfg.mode)


def _require(path: Path) -> Path:
    if not path.exists():
        raise MissingArtifactError(path)
    return path


def _map_jobs(fn, items, jobs):
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as executor:
        return list(executor.map(fn, items))


# ----------------------------------------------------------------- parse

def cmd_parse(args, cfg) -> int:
    out_dir = _mode_dir(cfg)
    out_dir.mkdir(parents=True, exist_ok=True)

    if args.from_json:
        if cfg.mode != "structured":
            raise StructRagError("--from-json only applies to --mode structured")
        src = _require(Path(args.from_json))
        doc = document_from_json(src.read_bytes())
        problems = validate_document(doc)
        if problems:
            raise DocumentSchemaError("$", f"{len(problems)} invariant violation(s), first: {problems[0]}")
        target = out_dir / f"{_stem(src)}{DOC_SUFFIX}"
        target.write_bytes(document_to_json(doc))
        print(f"✅ Imported {src} -> {target}")
        return EXIT_OK

    inputs = [Path(p) for p in (args.inputs or cfg.inputs)]
    if not inputs:
        raise StructRagError("no input PDFs given")
    for p in inputs:
        _require(p)

    def run(path: Path):
        data = path.read_bytes()
        stem = path.stem
        if cfg.mode == "baseline":
            target = out_dir / f"{stem}{TEXT_SUFFIX}"
            target.write_text(extract_flat_text(data, word_gap_factor=cfg.layout.word_gap_factor),
                              encoding="utf-8", newline="\n")
            return target
        doc, pages = parse_pdf_pages(data, cfg.layout, source_id=stem)
        target = out_dir / f"{stem}{DOC_SUFFIX}"
        target.write_bytes(document_to_json(doc))
        if args.svg:
            write_overlays(doc, pages, out_dir / "overlays", stem)
        return target

    for target in _map_jobs(run, inputs, cfg.jobs):
        print(f"✅ Wrote {target}")
    return EXIT_OK


# ----------------------------------------------------------------- chunk

def _stage_inputs(out_dir: Path, suffix: str, stems):
    if stems:
        return [_require(out_dir / f"{Path(s).stem if s.endswith('.pdf') else s}{suffix}") for s in stems]
    found = sorted(out_dir.glob(f"*{suffix}"))
    if not found:
        raise MissingArtifactError(out_dir / f"*{suffix}")
    return found


def cmd_chunk(args, cfg) -> int:
    out_dir = _mode_dir(cfg)
    suffix = DOC_SUFFIX if cfg.mode == "structured" else TEXT_SUFFIX

    def run(path: Path):
        stem = _stem(path)
        if cfg.mode == "structured":
            chunks = structure_chunk(document_from_json(path.read_bytes()), cfg.policy)
        else:
            chunks = recursive_split(path.read_text(encoding="utf-8"), cfg.policy, source_id=stem)
        target = out_dir / f"{stem}{CHUNKS_SUFFIX}"
        chunks_to_jsonl(chunks, target)
        return target, len(chunks)

    for target, n in _map_jobs(run, _stage_inputs(out_dir, suffix, args.inputs), cfg.jobs):
        print(f"✅ {n} chunk(s) -> {target}")
    return EXIT_OK


# ----------------------------------------------------------------- index

def cmd_index(args, cfg) -> int:
    out_dir = _mode_dir(cfg)
    chunks = []
    for path in _stage_inputs(out_dir, CHUNKS_SUFFIX, args.inputs):
        chunks.extend(chunks_from_jsonl(path))
    provider = make_embedding_provider(cfg.embedding)
    index = build_index(chunks, provider)
    chunks_to_jsonl(chunks, out_dir / "chunks.jsonl")
    index.save(out_dir / "index.bin")
    print(f"✅ Indexed {len(chunks)} chunk(s) -> {out_dir / 'index.bin'}")
    return EXIT_OK


# ------------------------------------------------------------------- ask

def _load_stage(cfg, mode):
    out_dir = _mode_dir(cfg, mode)
    store = ChunkStore.load(_require(out_dir / "chunks.jsonl"))
    index = VectorIndex.load(_require(out_dir / "index.bin"))
    return index, store


def cmd_ask(args, cfg) -> int:
    index, store = _load_stage(cfg, cfg.mode)
    embedder = make_embedding_provider(cfg.embedding)
    chat = make_chat_provider(cfg.chat)
    results, context = retrieve(args.question, index, store, embedder, cfg.top_k, cfg.budget_tokens,
                                cfg.policy.token_counter, document_ref=args.doc)
    reply = answer(args.question, context, chat)
    transcript = {
        "mode": cfg.mode,
        "question": args.question,
        "answer": reply.text,
        "chunk_ids": list(reply.chunk_ids),
        "scores": [round(r.score, 6) for r in results],
        "context_tokens": context.token_total,
        "truncated": context.truncated,
    }
    print(json.dumps(transcript, ensure_ascii=False, sort_keys=True))
    return EXIT_OK


# ------------------------------------------------------------------ eval

def _run_system(question, stage, embedder, chat, cfg):
    index, store = stage
    _, context = retrieve(question.text, index, store, embedder, cfg.top_k, cfg.budget_tokens,
                          cfg.policy.token_counter, document_ref=question.document_ref or None)
    retrieved = "\n\n".join(context.texts)
    reply = answer(question.text, context, chat).text if question.category == "extractive" else None
    return retrieved, reply


def build_records(questions, stages, embedder, chat, cfg) -> list[EvalRecord]:
    """Pairs structured (A) against baseline (B) on every question."""
    records = []
    for q in questions:
        retrieved_a, answer_a = _run_system(q, stages["structured"], embedder, chat, cfg)
        retrieved_b, answer_b = _run_system(q, stages["baseline"], embedder, chat, cfg)
        records.append(EvalRecord(
            question_id=q.id, category=q.category, question=q.text,
            system_a="structured", system_b="baseline",
            retrieved_a=retrieved_a, retrieved_b=retrieved_b,
            answer_a=answer_a, answer_b=answer_b,
        ))
    return records


def _load_records(path: Path) -> list[EvalRecord]:
    records = []
    for row_no, row in enumerate(read_jsonl(_require(path)), start=1):
        try:
            records.append(EvalRecord.from_dict(row))
        except TypeError as e:
            raise MalformedRowError(path, row_no, f"not an evaluation record ({e})") from e
    return records


def cmd_eval(args, cfg) -> int:
    eval_dir = Path(cfg.output_dir) / "eval"
    records_path = eval_dir / "records.jsonl"
    if args.ab:
        if not args.questions:
            raise StructRagError("--ab needs --questions FILE")
        questions = load_questions(_require(Path(args.questions)))
        stages = {mode: _load_stage(cfg, mode) for mode in MODES}
        embedder = make_embedding_provider(cfg.embedding)
        chat = make_chat_provider(cfg.chat)
        records = build_records(questions, stages, embedder, chat, cfg)
    else:
        records = _load_records(records_path)

    if args.annotations:
        records = ingest_human_scores(records, _require(Path(args.annotations)))
    if not args.no_judge:
        judge = make_chat_provider(cfg.judge, role="judge")
        categories = ("extractive",) + JUDGED_CATEGORIES if args.judge_extractive else JUDGED_CATEGORIES
        records = judge_records(records, judge, cfg.judge_parallelism, categories=categories)

    write_jsonl(records_path, (r.to_dict() for r in records))
    unscored = sum(1 for r in records if not r.scored)
    print(f"✅ {len(records)} record(s) -> {records_path}" + (f" ({unscored} unscored)" if unscored else ""))
    return EXIT_OK


# ---------------------------------------------------------------- report

def cmd_report(args, cfg) -> int:
    records_path = Path(args.records) if args.records else Path(cfg.output_dir) / "eval" / "records.jsonl"
    records = _load_records(records_path)
    agg = aggregate(records, cfg.tie_margin_human, cfg.tie_margin_judge, cfg.bin_edges)
    written = report(agg, Path(cfg.output_dir) / "report")
    for path in written:
        print(f"✅ Wrote {path}")
    return EXIT_OK


# ------------------------------------------------------------------ main

COMMANDS = {
    "parse": cmd_parse,
    "chunk": cmd_chunk,
    "index": cmd_index,
    "ask": cmd_ask,
    "eval": cmd_eval,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="structrag",
                                     description="Parse, chunk, retrieve and evaluate PDF question answering.")
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--mode", choices=MODES, help="pipeline preset (default: structured)")
    parser.add_argument("--jobs", type=int, help="documents processed in parallel")
    parser.add_argument("--out", help="output directory (default: out)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse", help="PDF -> Document JSON (structured) or flat text (baseline)")
    p.add_argument("inputs", nargs="*", help="PDF files")
    p.add_argument("--svg", action="store_true", help="also write per-page block overlays")
    p.add_argument("--from-json", help="import an externally parsed Document JSON instead of a PDF")

    p = sub.add_parser("chunk", help="parse artifacts -> <stem>.chunks.jsonl")
    p.add_argument("inputs", nargs="*", help="document stems (default: every parse artifact)")

    p = sub.add_parser("index", help="chunks -> chunks.jsonl + index.bin")
    p.add_argument("inputs", nargs="*", help="document stems (default: every chunk file)")

    p = sub.add_parser("ask", help="answer one question from the index")
    p.add_argument("question")
    p.add_argument("--doc", help="restrict retrieval to one document (its stem)")

    p = sub.add_parser("eval", help="paired evaluation records")
    p.add_argument("--ab", action="store_true", help="run both modes on --questions")
    p.add_argument("--questions", help="question file (CSV or JSON lines)")
    p.add_argument("--annotations", help="human scores (CSV, XLSX or JSON lines)")
    p.add_argument("--no-judge", action="store_true", help="skip LLM judging")
    p.add_argument("--judge-extractive", action="store_true",
                   help="also judge extractive questions left without human scores")

    p = sub.add_parser("report", help="records -> report bundle")
    p.add_argument("--records", help="records file (default: <out>/eval/records.jsonl)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.verbose)
    try:
        cfg = load_run_config(args.config, mode=args.mode, jobs=args.jobs, output_dir=args.out)
        return COMMANDS[args.command](args, cfg)
    except UnsupportedInputError as e:
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_UNSUPPORTED
    except MissingArtifactError as e:
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_MISSING
    except StructRagError as e:
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_FAILURE
    except OSError as e:
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_FAILURE

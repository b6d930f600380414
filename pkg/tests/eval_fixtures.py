"""Evaluation records reproducing a published win/tie/loss split."""
from structrag.evaluation import EvalRecord

# (wins, ties, losses) per category
PUBLISHED_SPLIT = {"extractive": (42, 36, 8), "comprehensive": (101, 79, 36)}

# (score_a, score_b) for a win, tie and loss; judge scores sit inside/outside the 0.25 margin
HUMAN_SCORES = ((8.0, 5.0), (6.0, 6.0), (4.0, 7.0))
JUDGE_SCORES = ((7.5, 6.0), (6.1, 6.0), (5.0, 7.0))


def record(qid, category, score_a=None, score_b=None, source=None, **kw):
    return EvalRecord(
        question_id=qid, category=category, question=kw.pop("question", f"question {qid}"),
        system_a="structured", system_b="baseline",
        retrieved_a=kw.pop("retrieved_a", "structured context"), retrieved_b=kw.pop("retrieved_b", "flat context"),
        score_a=score_a, score_b=score_b, score_source=source, **kw,
    )


def published_records():
    records = []
    for category, counts in PUBLISHED_SPLIT.items():
        scores, source = (HUMAN_SCORES, "human") if category == "extractive" else (JUDGE_SCORES, "judge")
        for (a, b), n in zip(scores, counts):
            for _ in range(n):
                records.append(record(f"{category[0]}{len(records)}", category, a, b, source))
    return records

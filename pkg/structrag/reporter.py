import logging
from pathlib import Path

import pandas as pd

from .errors import ReportWriteError

logger = logging.getLogger(__name__)

SCORE_COLUMNS = [
    "question_id", "category", "system_a", "system_b",
    "score_a", "score_b", "score_source", "outcome",
    "answer_a", "answer_b", "unscored_reason",
]


def prepare_dataframe(aggregates):
    """
    One row per record with the priority columns first.
    Keeps every column the records carry.
    """
    rows = []
    for record, result in zip(aggregates.records, aggregates.outcomes):
        row = record.to_dict()
        row["outcome"] = result
        rows.append(row)
    df = pd.DataFrame(rows, columns=None if rows else SCORE_COLUMNS)
    final_cols = SCORE_COLUMNS + [c for c in df.columns if c not in SCORE_COLUMNS]
    final_cols = [c for c in final_cols if c in df.columns]
    # retrieved context is long; it lives in records.jsonl
    final_cols = [c for c in final_cols if c not in ("retrieved_a", "retrieved_b", "question")]
    return df[final_cols]


def summary_dataframe(aggregates):
    a, b = aggregates.system_a, aggregates.system_b
    return pd.DataFrame(
        [
            {
                "Question category": row.label,
                "Total": row.total,
                f"{a} wins": f"{row.wins} ({row.win_pct}%)",
                "Tie": f"{row.ties} ({row.tie_pct}%)",
                f"{b} wins": f"{row.losses} ({row.loss_pct}%)",
            }
            for row in aggregates.rows
        ],
        columns=["Question category", "Total", f"{a} wins", "Tie", f"{b} wins"],
    )


def summary_markdown(aggregates) -> str:
    df = summary_dataframe(aggregates)
    lines = ["# Evaluation summary", ""]
    lines.append("| " + " | ".join(df.columns) + " |")
    lines.append("|" + "|".join(["---"] * len(df.columns)) + "|")
    for values in df.itertuples(index=False):
        lines.append("| " + " | ".join(str(v) for v in values) + " |")
    lines.append("")
    lines.append(f"Counts are questions; percentages are of each row's total. "
                 f"A win means {aggregates.system_a} scored higher.")
    return "\n".join(lines) + "\n"


def matrix_dataframe(matrix):
    labels = matrix.labels
    df = pd.DataFrame(matrix.counts, index=labels, columns=labels)
    df.index.name = "a\\b"
    return df


def save_excel(scores_df, summary_df, filename):
    writer = pd.ExcelWriter(filename, engine="xlsxwriter")
    workbook = writer.book
    summary_df.to_excel(writer, sheet_name="Summary", index=False)
    scores_df.to_excel(writer, sheet_name="Scores", index=False)

    header = workbook.add_format({"bold": True, "bg_color": "#2c3e50", "font_color": "white"})
    bad = workbook.add_format({"bg_color": "#FFC7CE", "font_color": "#9C0006"})
    good = workbook.add_format({"bg_color": "#C6EFCE", "font_color": "#006100"})

    for sheet, df in (("Summary", summary_df), ("Scores", scores_df)):
        ws = writer.sheets[sheet]
        for i, col in enumerate(df.columns):
            ws.write(0, i, col, header)
        ws.set_column("A:A", 28)

    ws = writer.sheets["Scores"]
    if "outcome" in scores_df.columns and len(scores_df):
        idx = scores_df.columns.get_loc("outcome")
        ws.conditional_format(1, idx, len(scores_df), idx,
                              {"type": "cell", "criteria": "==", "value": '"loss"', "format": bad})
        ws.conditional_format(1, idx, len(scores_df), idx,
                              {"type": "cell", "criteria": "==", "value": '"win"', "format": good})

    writer.close()
    return filename


def write_report(aggregates, path):
    """
    Report bundle in directory `path`:
    scores.csv, summary.md, matrix_<category>.csv and report.xlsx.
    """
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        scores_df = prepare_dataframe(aggregates)
        scores_df.to_csv(out / "scores.csv", index=False, lineterminator="\n")
        (out / "summary.md").write_text(summary_markdown(aggregates), encoding="utf-8", newline="\n")
        written = [out / "scores.csv", out / "summary.md"]
        for category, matrix in aggregates.matrices.items():
            target = out / f"matrix_{category}.csv"
            matrix_dataframe(matrix).to_csv(target, lineterminator="\n")
            written.append(target)
        written.append(Path(save_excel(scores_df, summary_dataframe(aggregates), out / "report.xlsx")))
    except OSError as e:
        raise ReportWriteError(f"cannot write report to {out}: {e}") from e
    logger.info("Report written to %s (%d file(s))", out, len(written))
    return written

"""Evaluation reports: JSONL output, a console table, and rendered figures."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .evaluation import (
    CORRECTNESS_SCALE,
    FAITHFULNESS_SCALE,
    SYSTEMS,
    EvalRecord,
    EvalSummary,
)
from .retrieval.persist import atomic_write_text


def write_report_jsonl(path: str | Path, records: Sequence[EvalRecord], summary: EvalSummary) -> Path:
    """One JSON object per question followed by one summary object."""
    path = Path(path)
    lines = [json.dumps(record.to_dict(), sort_keys=True) for record in records]
    lines.append(json.dumps(summary.to_dict(), sort_keys=True))
    atomic_write_text(path, "\n".join(lines) + "\n")
    return path


def format_summary_table(summary: EvalSummary) -> str:
    lines = [f"questions: {summary.question_count}  failures: {summary.failure_count}"]
    if summary.retrieval:
        lines.append(f"{'system':<8}{'recall':>10}{'mrr':>10}")
        for system in SYSTEMS:
            row = summary.retrieval.get(system)
            if row is not None:
                lines.append(f"{system:<8}{row['recall']:>10.4f}{row['mrr']:>10.4f}")
    if summary.correctness_mean is not None:
        lines.append(f"correctness mean: {summary.correctness_mean:.4f}")
    if summary.faithfulness_mean is not None:
        lines.append(f"faithfulness mean: {summary.faithfulness_mean:.4f}")
    lines.append(
        f"needed revision: {summary.needed_revision_count}  "
        f"revised: {summary.revised_count}  degraded: {summary.degraded_count}"
    )
    return "\n".join(lines)


def render_figures(out_dir: str | Path, summary: EvalSummary) -> list[Path]:
    """Render available figures into out_dir and return the written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths: list[Path] = []
    if summary.retrieval:
        paths.append(_retrieval_figure(out_dir / "retrieval_comparison.png", summary))
    if summary.correctness_counts or summary.faithfulness_counts:
        paths.append(_judge_figure(out_dir / "judge_scores.png", summary))
    return paths


def _retrieval_figure(path: Path, summary: EvalSummary) -> Path:
    systems = [system for system in SYSTEMS if system in summary.retrieval]
    recalls = [summary.retrieval[system]["recall"] for system in systems]
    mrrs = [summary.retrieval[system]["mrr"] for system in systems]
    positions = range(len(systems))
    width = 0.38
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar([p - width / 2 for p in positions], recalls, width, label="recall")
    ax.bar([p + width / 2 for p in positions], mrrs, width, label="MRR")
    ax.set_xticks(list(positions))
    ax.set_xticklabels(systems)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("score")
    ax.set_title("Retrieval comparison")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def _judge_figure(path: Path, summary: EvalSummary) -> Path:
    fig, axes = plt.subplots(1, 2, figsize=(8, 4))
    panels = (
        (axes[0], summary.correctness_counts, CORRECTNESS_SCALE, "correctness"),
        (axes[1], summary.faithfulness_counts, FAITHFULNESS_SCALE, "faithfulness"),
    )
    for ax, counts, scale, title in panels:
        ax.bar([str(score) for score in scale], [counts.get(score, 0) for score in scale])
        ax.set_title(title)
        ax.set_xlabel("score")
        ax.set_ylabel("questions")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path

"""Figure rendering for evaluation and tuning reports.

Each helper writes one PNG next to the delimited output it illustrates and
returns the path. All figures use the Agg backend so they render headless.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

FIG_SIZE = (6.0, 3.8)
DPI = 120


def _finish(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return path


def save_iou_histogram(values: Sequence[float], path: str | Path,
                       title: str = "IoU distribution",
                       xlabel: str = "IoU") -> Path:
    fig, ax = plt.subplots(figsize=FIG_SIZE)
    ax.hist(list(values), bins=20, range=(0.0, 1.0), color="#4878a8",
            edgecolor="white")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("sentences")
    ax.set_title(title)
    return _finish(fig, path)


def save_eval_summary(report, path: str | Path) -> Path:
    """Bar chart of the TP/FP/TN/FN counts with the headline metrics."""
    fig, ax = plt.subplots(figsize=FIG_SIZE)
    labels = ["TP", "FP", "TN", "FN"]
    counts = [report.tp, report.fp, report.tn, report.fn]
    ax.bar(labels, counts, color=["#3a7d44", "#b5442d", "#888888", "#c9a227"])
    ax.set_ylabel("sentence pairs")
    bits = [f"mean IoU {report.mean_iou:.3f}"]
    if report.precision is not None:
        bits.append(f"precision {report.precision:.3f}")
    if report.recall is not None:
        bits.append(f"recall {report.recall:.3f}")
    ax.set_title(", ".join(bits))
    return _finish(fig, path)


def save_threshold_sweep(rows: Sequence, path: str | Path) -> Path:
    """Kept-quality vs recall trade-off across estimate thresholds."""
    thresholds = [row.threshold for row in rows]
    fig, ax = plt.subplots(figsize=FIG_SIZE)
    ious = [row.mean_iou_kept for row in rows]
    if any(v is not None for v in ious):
        ax.plot(thresholds, [v if v is not None else float("nan") for v in ious],
                "o-", color="#4878a8", label="mean IoU of kept")
    recalls = [row.sentence_recall for row in rows]
    if any(v is not None for v in recalls):
        ax.plot(thresholds,
                [v if v is not None else float("nan") for v in recalls],
                "s--", color="#b5442d", label="sentence recall")
    ax.set_xlabel("estimate threshold")
    ax.set_ylim(0.0, 1.05)
    ax.legend(loc="best")
    ax.set_title("threshold sweep")
    return _finish(fig, path)


def save_tune_trials(scores: Sequence[float], path: str | Path,
                     best_index: Optional[int] = None) -> Path:
    fig, ax = plt.subplots(figsize=FIG_SIZE)
    ax.plot(range(len(scores)), list(scores), "o", color="#4878a8", alpha=0.7)
    if best_index is not None:
        ax.plot([best_index], [scores[best_index]], "*", color="#b5442d",
                markersize=14, label=f"best {scores[best_index]:.3f}")
        ax.legend(loc="best")
    ax.set_xlabel("trial")
    ax.set_ylabel("cv mean IoU")
    ax.set_title("parameter search trials")
    return _finish(fig, path)

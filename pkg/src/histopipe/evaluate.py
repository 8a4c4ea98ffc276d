"""Evaluation: confusion matrices, accuracy / weighted F1 / sensitivity, and
comparison reports across runs.

Class axes follow the canonical order (N, PB, UDH, FEA, ADH, DCIS, IC); rows
are true classes, columns predictions. All functions are pure.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .labels import ClassLabel, CLASS_ORDER


class EvaluationError(ValueError):
    """Fatal evaluation input error."""


DEFAULT_CLASS_NAMES = tuple(c.value for c in CLASS_ORDER)


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray  # (k, k) int64, rows = true, cols = predicted
    class_names: tuple[str, ...] = DEFAULT_CLASS_NAMES

    def __post_init__(self) -> None:
        k = len(self.class_names)
        if self.counts.shape != (k, k):
            raise EvaluationError(
                f"confusion matrix shape {self.counts.shape} does not match {k} classes"
            )
        if np.any(self.counts < 0):
            raise EvaluationError("confusion matrix entries must be nonnegative")

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int
    degenerate: bool = False  # a zero denominator forced a metric to 0


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    weighted_f1: float
    sensitivity: float  # macro-averaged recall
    weighted_recall: float  # support-weighted recall, emitted for transparency
    per_class: dict[str, ClassMetrics]

    def as_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "weighted_f1": self.weighted_f1,
            "sensitivity": self.sensitivity,
            "weighted_recall": self.weighted_recall,
            "per_class": {
                name: {
                    "precision": m.precision,
                    "recall": m.recall,
                    "f1": m.f1,
                    "support": m.support,
                    "degenerate": m.degenerate,
                }
                for name, m in self.per_class.items()
            },
        }


def _as_index(label, class_names: Sequence[str]) -> int:
    if isinstance(label, ClassLabel):
        label = label.value
    if isinstance(label, str):
        if label not in class_names:
            raise EvaluationError(f"invalid class code {label!r} (classes: {list(class_names)})")
        return class_names.index(label)
    idx = int(label)
    if not 0 <= idx < len(class_names):
        raise EvaluationError(f"class index {idx} out of range for {len(class_names)} classes")
    return idx


def confusion(
    true_labels: Sequence, predicted_labels: Sequence,
    class_names: Sequence[str] = DEFAULT_CLASS_NAMES,
) -> ConfusionMatrix:
    """Count matrix over (true, predicted) pairs; labels may be codes or indices."""
    if len(true_labels) != len(predicted_labels):
        raise EvaluationError(
            f"label sequences differ in length: {len(true_labels)} vs {len(predicted_labels)}"
        )
    k = len(class_names)
    counts = np.zeros((k, k), dtype=np.int64)
    for t, p in zip(true_labels, predicted_labels):
        counts[_as_index(t, class_names), _as_index(p, class_names)] += 1
    return ConfusionMatrix(counts, tuple(class_names))


def compute_metrics(cm: ConfusionMatrix) -> MetricsReport:
    """Accuracy, weighted F1, macro sensitivity, and per-class P/R/F1.

    Zero-denominator per-class values are reported as 0 and flagged, never NaN.
    """
    counts = cm.counts.astype(np.float64)
    total = counts.sum()
    if total == 0:
        raise EvaluationError("cannot compute metrics for an all-zero confusion matrix")
    diag = np.diag(counts)
    row = counts.sum(axis=1)
    col = counts.sum(axis=0)
    per_class: dict[str, ClassMetrics] = {}
    recalls, f1s, supports = [], [], []
    for i, name in enumerate(cm.class_names):
        degenerate = False
        if col[i] > 0:
            precision = diag[i] / col[i]
        else:
            precision, degenerate = 0.0, True
        if row[i] > 0:
            recall = diag[i] / row[i]
        else:
            recall, degenerate = 0.0, True
        if precision + recall > 0:
            f1 = 2 * precision * recall / (precision + recall)
        else:
            f1, degenerate = 0.0, True
        per_class[name] = ClassMetrics(float(precision), float(recall), float(f1), int(row[i]), degenerate)
        recalls.append(recall)
        f1s.append(f1)
        supports.append(row[i])
    supports_arr = np.array(supports)
    return MetricsReport(
        accuracy=float(diag.sum() / total),
        weighted_f1=float(np.dot(supports_arr, f1s) / total),
        sensitivity=float(np.mean(recalls)),
        weighted_recall=float(np.dot(supports_arr, recalls) / total),
        per_class=per_class,
    )


def error_rates(cm: ConfusionMatrix) -> dict[str, dict[str, float]]:
    """Per-class false-negative and false-positive rates from the count matrix.

    FN rate: off-diagonal row mass over the class's true count. FP rate:
    off-diagonal column mass over the count of all other classes.
    """
    counts = cm.counts.astype(np.float64)
    total = counts.sum()
    diag = np.diag(counts)
    row = counts.sum(axis=1)
    col = counts.sum(axis=0)
    out = {}
    for i, name in enumerate(cm.class_names):
        fn = (row[i] - diag[i]) / row[i] if row[i] > 0 else 0.0
        fp = (col[i] - diag[i]) / (total - row[i]) if total > row[i] else 0.0
        out[name] = {"false_negative_rate": float(fn), "false_positive_rate": float(fp)}
    return out


def confusion_to_csv(cm: ConfusionMatrix, path: Path | str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["true\\pred", *cm.class_names])
        for name, row in zip(cm.class_names, cm.counts):
            writer.writerow([name, *[int(v) for v in row]])


def confusion_heatmap(cm: ConfusionMatrix, path: Path | str, title: str = "") -> None:
    """Render the count matrix as a heatmap PNG."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 5))
    im = ax.imshow(cm.counts, cmap="Blues")
    k = len(cm.class_names)
    ax.set_xticks(range(k), cm.class_names)
    ax.set_yticks(range(k), cm.class_names)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    if title:
        ax.set_title(title)
    vmax = cm.counts.max() if cm.total else 1
    for i in range(k):
        for j in range(k):
            ax.text(j, i, str(int(cm.counts[i, j])), ha="center", va="center",
                    color="white" if cm.counts[i, j] > vmax / 2 else "black", fontsize=8)
    fig.colorbar(im, ax=ax)
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120)
    plt.close(fig)


REPORT_COLUMNS = [
    "model", "image_size", "augmentation", "dropout", "loss",
    "accuracy", "weighted_f1", "sensitivity",
]


def comparison_table(rows: list[dict]) -> list[dict]:
    """Sort run rows by descending weighted F1 and flag the best one."""
    if not rows:
        raise EvaluationError("no runs to report")
    ordered = sorted(rows, key=lambda r: -float(r["weighted_f1"]))
    out = []
    for i, row in enumerate(ordered):
        row = dict(row)
        row["best"] = i == 0
        out.append(row)
    return out


def write_comparison_csv(rows: list[dict], path: Path | str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    ordered = comparison_table(rows)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(REPORT_COLUMNS)
        for row in ordered:
            writer.writerow([
                row["model"], row["image_size"], row["augmentation"], row["dropout"],
                row["loss"],
                f"{float(row['accuracy']):.3f}",
                f"{float(row['weighted_f1']):.3f}",
                f"{float(row['sensitivity']):.3f}",
            ])


def format_comparison(rows: list[dict]) -> str:
    ordered = comparison_table(rows)
    widths = {c: max(len(c), *(len(str(r.get(c, ""))) for r in ordered)) for c in REPORT_COLUMNS}
    lines = ["  ".join(c.ljust(widths[c]) for c in REPORT_COLUMNS) + "  best"]
    for row in ordered:
        cells = []
        for c in REPORT_COLUMNS:
            v = row[c]
            if isinstance(v, float):
                v = f"{v:.3f}"
            cells.append(str(v).ljust(widths[c]))
        lines.append("  ".join(cells) + ("  *" if row["best"] else ""))
    return "\n".join(lines)

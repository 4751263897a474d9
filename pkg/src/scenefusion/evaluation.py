"""Confusion matrices, macro/weighted metrics, fold aggregation, and reports."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import cache
from .datamodel import ClassVocabulary
from .errors import ValidationError


@dataclass(frozen=True)
class ConfusionMatrix:
    """counts[i][j] = number of samples with true class i predicted as j."""

    counts: np.ndarray
    classes: tuple[str, ...]

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class MetricReport:
    accuracy: float
    per_class_precision: tuple[float, ...]
    per_class_recall: tuple[float, ...]
    per_class_f1: tuple[float, ...]
    support: tuple[int, ...]
    macro_precision: float = field(default=0.0)
    macro_recall: float = field(default=0.0)
    macro_f1: float = field(default=0.0)
    weighted_precision: float = field(default=0.0)
    weighted_recall: float = field(default=0.0)
    weighted_f1: float = field(default=0.0)

    def as_dict(self) -> dict[str, float]:
        return {
            "accuracy": self.accuracy,
            "macro_precision": self.macro_precision,
            "weighted_precision": self.weighted_precision,
            "macro_recall": self.macro_recall,
            "weighted_recall": self.weighted_recall,
            "macro_f1": self.macro_f1,
            "weighted_f1": self.weighted_f1,
        }


METRIC_COLUMNS = (
    "accuracy",
    "macro_precision", "weighted_precision",
    "macro_recall", "weighted_recall",
    "macro_f1", "weighted_f1",
)


def confusion(
    true_labels: Sequence[int | str],
    pred_labels: Sequence[int | str],
    vocabulary: ClassVocabulary,
) -> ConfusionMatrix:
    """Count (true, predicted) pairs; labels may be names or indices."""
    if len(true_labels) != len(pred_labels):
        raise ValidationError(
            f"label lists differ in length: {len(true_labels)} vs {len(pred_labels)}"
        )

    def to_index(label) -> int:
        if isinstance(label, str):
            return vocabulary.index(label)
        idx = int(label)
        if not (0 <= idx < vocabulary.size):
            raise ValidationError(f"label index {idx} out of range")
        return idx

    counts = np.zeros((vocabulary.size, vocabulary.size), dtype=np.int64)
    for t, p in zip(true_labels, pred_labels):
        counts[to_index(t), to_index(p)] += 1
    return ConfusionMatrix(counts, vocabulary.names)


def metrics(cm: ConfusionMatrix) -> MetricReport:
    """One-vs-rest precision/recall/F1 per class plus macro/weighted means.

    A class with zero predicted positives has precision 0 (likewise recall for
    zero support); such classes still count in the macro averages.
    """
    counts = cm.counts
    total = counts.sum()
    if total == 0:
        raise ValidationError("empty confusion matrix")
    tp = np.diag(counts).astype(np.float64)
    pred_pos = counts.sum(axis=0).astype(np.float64)
    support = counts.sum(axis=1).astype(np.float64)

    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(pred_pos > 0, tp / pred_pos, 0.0)
        recall = np.where(support > 0, tp / support, 0.0)
        pr = precision + recall
        f1 = np.where(pr > 0, 2 * precision * recall / pr, 0.0)

    weights = support / total
    return MetricReport(
        accuracy=float(tp.sum() / total),
        per_class_precision=tuple(precision),
        per_class_recall=tuple(recall),
        per_class_f1=tuple(f1),
        support=tuple(int(s) for s in support),
        macro_precision=float(precision.mean()),
        macro_recall=float(recall.mean()),
        macro_f1=float(f1.mean()),
        weighted_precision=float(precision @ weights),
        weighted_recall=float(recall @ weights),
        weighted_f1=float(f1 @ weights),
    )


def aggregate(reports: Sequence[MetricReport]) -> dict[str, tuple[float, float]]:
    """Element-wise sample mean and sample standard deviation per metric."""
    if not reports:
        raise ValidationError("no reports to aggregate")
    out: dict[str, tuple[float, float]] = {}
    for key in METRIC_COLUMNS:
        values = np.array([r.as_dict()[key] for r in reports])
        std = float(values.std(ddof=1)) if len(values) > 1 else 0.0
        out[key] = (float(values.mean()), std)
    return out


def format_aggregate_row(agg: dict[str, tuple[float, float]]) -> str:
    """One table row in the mean +/- std layout: Acc, P(M/W), R(M/W), F1(M/W)."""
    return ",".join(f"{m:.2f} ± {s:.2f}" for m, s in (agg[k] for k in METRIC_COLUMNS))


def emit_report(
    reports: Sequence[MetricReport],
    cm: ConfusionMatrix,
    out_dir: str | Path,
) -> dict[str, Path]:
    """Write the metrics table, raw confusion counts, and a heatmap image."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    agg = aggregate(reports)
    table_path = out_dir / "metrics.csv"
    header = "accuracy,precision_macro,precision_weighted,recall_macro,recall_weighted,f1_macro,f1_weighted"
    cache.atomic_write_text(table_path, header + "\n" + format_aggregate_row(agg) + "\n")

    counts_path = out_dir / "confusion_counts.json"
    cache.atomic_write_json(
        counts_path,
        {"classes": list(cm.classes), "counts": cm.counts.tolist()},
    )

    heatmap_path = out_dir / "confusion.png"
    _write_heatmap(cm, heatmap_path)
    return {"metrics": table_path, "counts": counts_path, "heatmap": heatmap_path}


def _write_heatmap(cm: ConfusionMatrix, path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    counts = cm.counts.astype(np.float64)
    row_sums = counts.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore"):
        pct = np.where(row_sums > 0, 100.0 * counts / row_sums, 0.0)

    n = len(cm.classes)
    fig, ax = plt.subplots(figsize=(1.0 + 0.9 * n, 1.0 + 0.8 * n))
    ax.imshow(pct, cmap="Blues", vmin=0, vmax=100)
    ax.set_xticks(range(n), cm.classes, rotation=45, ha="right")
    ax.set_yticks(range(n), cm.classes)
    ax.set_xlabel("Predicted")
    ax.set_ylabel("True")
    for i in range(n):
        for j in range(n):
            ax.text(j, i, f"{pct[i, j]:.1f}", ha="center", va="center",
                    fontsize=7, color="black" if pct[i, j] < 60 else "white")
    fig.tight_layout()
    tmp = path.with_name(path.name + ".tmp.png")
    fig.savefig(tmp, dpi=100, metadata={"Software": "scenefusion"})
    plt.close(fig)
    tmp.replace(path)

"""Confusion matrices, the four scoring metrics, and repetition aggregates.

Binary metrics use the standard contingency definitions:

    accuracy  = (TP + TN) / (TP + FN + TN + FP)
    precision = TP / (TP + FP)
    recall    = TP / (TP + FN)
    F1        = 2*TP / (2*TP + FP + FN)

A zero denominator yields 0.0 and records the metric name in
``undefined_flags`` instead of raising, so degenerate cells (a model that
never predicts the positive class, say) still aggregate cleanly. Multiclass
reports average per-class one-vs-rest metrics without weighting.
"""
from __future__ import annotations

import statistics
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .errors import MetricsError

METRIC_NAMES = ("accuracy", "precision", "recall", "f1")


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts indexed [actual][predicted], aligned to ``label_space``."""

    counts: tuple[tuple[int, ...], ...]
    label_space: tuple[str, ...]

    def __post_init__(self):
        c = len(self.label_space)
        if len(self.counts) != c or any(len(row) != c for row in self.counts):
            raise MetricsError("confusion matrix shape does not match label space")
        if any(v < 0 for row in self.counts for v in row):
            raise MetricsError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return sum(v for row in self.counts for v in row)

    def binary_counts(self, positive_class: str) -> tuple[int, int, int, int]:
        """(tp, fp, fn, tn) treating ``positive_class`` against the rest."""
        if positive_class not in self.label_space:
            raise MetricsError(f"unknown positive class: {positive_class!r}")
        p = self.label_space.index(positive_class)
        tp = self.counts[p][p]
        fp = sum(self.counts[i][p] for i in range(len(self.label_space)) if i != p)
        fn = sum(self.counts[p][j] for j in range(len(self.label_space)) if j != p)
        tn = self.total - tp - fp - fn
        return tp, fp, fn, tn


@dataclass(frozen=True)
class MetricReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    averaging: str  # "binary_positive" | "macro"
    undefined_flags: frozenset[str] = frozenset()
    positive_class: str | None = None
    per_class: Mapping[str, Mapping[str, float]] = field(default_factory=dict)

    def value(self, metric: str) -> float:
        if metric not in METRIC_NAMES:
            raise MetricsError(f"unknown metric: {metric!r}")
        return getattr(self, metric)


@dataclass(frozen=True)
class AggregateReport:
    means: Mapping[str, float]
    sds: Mapping[str, float]
    n: int
    averaging: str
    undefined_flags: frozenset[str] = frozenset()


def confusion_matrix(
    truth: Sequence[str], preds: Sequence[str], label_space: Sequence[str]
) -> ConfusionMatrix:
    """Count (actual, predicted) pairs over the declared label space."""
    if len(truth) != len(preds):
        raise MetricsError(f"length mismatch: {len(truth)} truth vs {len(preds)} predictions")
    space = tuple(str(c) for c in label_space)
    index = {c: i for i, c in enumerate(space)}
    grid = [[0] * len(space) for _ in space]
    for t, p in zip(truth, preds):
        t, p = str(t), str(p)
        if t not in index:
            raise MetricsError(f"unknown truth label: {t!r}")
        if p not in index:
            raise MetricsError(f"unknown predicted label: {p!r}")
        grid[index[t]][index[p]] += 1
    return ConfusionMatrix(tuple(tuple(row) for row in grid), space)


def _safe_div(num: float, den: float, flag: str, flags: set[str]) -> float:
    if den == 0:
        flags.add(flag)
        return 0.0
    return num / den


def compute_metrics(cm: ConfusionMatrix, positive_class: str | None = None) -> MetricReport:
    """Binary metrics for ``positive_class``, or unweighted macro when None."""
    if cm.total == 0:
        raise MetricsError("empty confusion matrix")
    flags: set[str] = set()
    if positive_class is not None:
        tp, fp, fn, tn = cm.binary_counts(str(positive_class))
        accuracy = (tp + tn) / cm.total
        precision = _safe_div(tp, tp + fp, "precision", flags)
        recall = _safe_div(tp, tp + fn, "recall", flags)
        f1 = _safe_div(2 * tp, 2 * tp + fp + fn, "f1", flags)
        return MetricReport(
            accuracy=accuracy,
            precision=precision,
            recall=recall,
            f1=f1,
            averaging="binary_positive",
            undefined_flags=frozenset(flags),
            positive_class=str(positive_class),
        )

    per_class: dict[str, dict[str, float]] = {}
    for c in cm.label_space:
        tp, fp, fn, _ = cm.binary_counts(c)
        per_class[c] = {
            "precision": _safe_div(tp, tp + fp, f"precision[{c}]", flags),
            "recall": _safe_div(tp, tp + fn, f"recall[{c}]", flags),
            "f1": _safe_div(2 * tp, 2 * tp + fp + fn, f"f1[{c}]", flags),
        }
    k = len(cm.label_space)
    correct = sum(cm.counts[i][i] for i in range(k))
    return MetricReport(
        accuracy=correct / cm.total,
        precision=sum(v["precision"] for v in per_class.values()) / k,
        recall=sum(v["recall"] for v in per_class.values()) / k,
        f1=sum(v["f1"] for v in per_class.values()) / k,
        averaging="macro",
        undefined_flags=frozenset(flags),
        per_class=per_class,
    )


def mean_sd(values: Sequence[float]) -> tuple[float, float]:
    """Arithmetic mean and sample (n-1) standard deviation; sd 0 when n=1."""
    if not values:
        raise MetricsError("cannot aggregate an empty series")
    m = statistics.mean(values)
    sd = statistics.stdev(values) if len(values) > 1 else 0.0
    return float(m), float(sd)


def aggregate_reports(reports: Sequence[MetricReport]) -> AggregateReport:
    """Mean and sample sd of each metric over repetition reports."""
    if not reports:
        raise MetricsError("no reports to aggregate")
    modes = {r.averaging for r in reports}
    if len(modes) > 1:
        raise MetricsError(f"mixed averaging modes: {sorted(modes)}")
    flags: set[str] = set()
    means: dict[str, float] = {}
    sds: dict[str, float] = {}
    for name in METRIC_NAMES:
        means[name], sds[name] = mean_sd([r.value(name) for r in reports])
    if len(reports) == 1:
        flags.add("sd")
    return AggregateReport(
        means=means, sds=sds, n=len(reports), averaging=modes.pop(), undefined_flags=frozenset(flags)
    )

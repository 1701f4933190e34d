"""Confusion-matrix classification metrics.

Rows index the true class, columns the predicted class. Undefined
ratios (empty row or column) are reported as 0.0 with the corresponding
``*_defined`` flag cleared rather than raising, so downstream averaging
stays total.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class ConfusionMatrix:
    """Square count matrix: counts[true][predicted]."""

    counts: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        n = len(self.counts)
        if n == 0 or any(len(row) != n for row in self.counts):
            raise ConfigurationError("confusion matrix must be square and non-empty")
        if any(c < 0 for row in self.counts for c in row):
            raise ConfigurationError("confusion matrix counts must be non-negative")

    @classmethod
    def from_predictions(
        cls, y_true: Sequence[int], y_pred: Sequence[int], num_classes: int
    ) -> "ConfusionMatrix":
        y_true = np.asarray(y_true, dtype=int)
        y_pred = np.asarray(y_pred, dtype=int)
        if y_true.shape != y_pred.shape:
            raise ConfigurationError("y_true and y_pred must have equal length")
        if num_classes < 1:
            raise ConfigurationError("num_classes must be >= 1")
        if y_true.size and not (
            (0 <= y_true).all() and (y_true < num_classes).all()
            and (0 <= y_pred).all() and (y_pred < num_classes).all()
        ):
            raise ConfigurationError("labels must lie in [0, num_classes)")
        mat = np.zeros((num_classes, num_classes), dtype=int)
        np.add.at(mat, (y_true, y_pred), 1)
        return cls(counts=tuple(tuple(int(v) for v in row) for row in mat))

    @property
    def num_classes(self) -> int:
        return len(self.counts)

    @property
    def total(self) -> int:
        return sum(sum(row) for row in self.counts)

    def as_array(self) -> np.ndarray:
        return np.array(self.counts, dtype=float)


def accuracy(cm: ConfusionMatrix) -> float:
    """Trace over total; 0.0 for an empty matrix."""
    total = cm.total
    if total == 0:
        return 0.0
    return float(np.trace(cm.as_array()) / total)


@dataclass(frozen=True)
class ClassMetrics:
    label: int
    precision: float
    recall: float
    f1: float
    support: int
    precision_defined: bool
    recall_defined: bool


def precision_recall_per_class(cm: ConfusionMatrix) -> tuple[ClassMetrics, ...]:
    """Per-class precision, recall, and F1 with zero-division flags."""
    mat = cm.as_array()
    rows = mat.sum(axis=1)
    cols = mat.sum(axis=0)
    out = []
    for c in range(cm.num_classes):
        tp = mat[c][c]
        p_defined = cols[c] > 0
        r_defined = rows[c] > 0
        precision = float(tp / cols[c]) if p_defined else 0.0
        recall = float(tp / rows[c]) if r_defined else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
        out.append(
            ClassMetrics(
                label=c,
                precision=precision,
                recall=recall,
                f1=float(f1),
                support=int(rows[c]),
                precision_defined=bool(p_defined),
                recall_defined=bool(r_defined),
            )
        )
    return tuple(out)


def f1_weighted(cm: ConfusionMatrix) -> float:
    """F1 averaged with true-class frequencies as weights."""
    total = cm.total
    if total == 0:
        return 0.0
    per_class = precision_recall_per_class(cm)
    return float(sum(m.support / total * m.f1 for m in per_class))

"""Confusion-matrix performance measures and stratified fold assignment."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion counts must be nonnegative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.tp + other.tp, self.fp + other.fp,
                               self.fn + other.fn, self.tn + other.tn)

    @staticmethod
    def from_predictions(y_true, y_pred) -> "ConfusionMatrix":
        """Counts for signed labels (+1 positive, -1 negative)."""
        y_true = np.asarray(y_true)
        y_pred = np.asarray(y_pred)
        if y_true.shape != y_pred.shape:
            raise ValueError("label arrays differ in length")
        pos = y_true > 0
        pred_pos = y_pred > 0
        return ConfusionMatrix(
            tp=int(np.count_nonzero(pos & pred_pos)),
            fp=int(np.count_nonzero(~pos & pred_pos)),
            fn=int(np.count_nonzero(pos & ~pred_pos)),
            tn=int(np.count_nonzero(~pos & ~pred_pos)),
        )


@dataclass(frozen=True)
class Metrics:
    """Sensitivity, specificity, their geometric mean, and accuracy.

    A zero denominator yields metric 0 and sets degenerate, rather than NaN.
    """

    sn: float
    sp: float
    gmean: float
    acc: float
    degenerate: bool = False


def compute_metrics(cm: ConfusionMatrix) -> Metrics:
    degenerate = False
    if cm.tp + cm.fn > 0:
        sn = cm.tp / (cm.tp + cm.fn)
    else:
        sn, degenerate = 0.0, True
    if cm.tn + cm.fp > 0:
        sp = cm.tn / (cm.tn + cm.fp)
    else:
        sp, degenerate = 0.0, True
    gmean = math.sqrt(sn * sp)
    acc = (cm.tp + cm.tn) / cm.total if cm.total > 0 else 0.0
    if cm.total == 0:
        degenerate = True
    return Metrics(sn=sn, sp=sp, gmean=gmean, acc=acc, degenerate=degenerate)


def stratified_folds(labels, k: int, seed: int) -> np.ndarray:
    """Fold id per row; within every class, fold counts differ by at most one."""
    labels = np.asarray(labels)
    if k < 2:
        raise ValueError("k must be >= 2")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xF01D5]))
    assignment = np.empty(labels.shape[0], dtype=np.int64)
    offset = 0
    for value in np.unique(labels):
        idx = np.flatnonzero(labels == value)
        if idx.size < k:
            warnings.warn("class %r has %d points for %d folds; spreading as evenly "
                          "as possible" % (value, idx.size, k))
        perm = rng.permutation(idx)
        assignment[perm] = (np.arange(perm.size) + offset) % k
        offset += perm.size
    return assignment

"""Accuracy, ROC, AUC and EER."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyCounts, SingleClassLabels

__all__ = [
    "ConfusionCounts",
    "RocCurve",
    "accuracy",
    "roc_curve",
    "auc",
    "eer",
    "eer_point",
    "r2_score",
]


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    def __post_init__(self):
        if min(self.tp, self.tn, self.fp, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    @classmethod
    def from_decisions(cls, predicted, actual) -> "ConfusionCounts":
        p = np.asarray(predicted, dtype=bool)
        a = np.asarray(actual, dtype=bool)
        return cls(
            tp=int(np.sum(p & a)),
            tn=int(np.sum(~p & ~a)),
            fp=int(np.sum(p & ~a)),
            fn=int(np.sum(~p & a)),
        )


def accuracy(c: ConfusionCounts) -> float:
    if c.total == 0:
        raise EmptyCounts("accuracy of zero trials is undefined")
    return (c.tp + c.tn) / c.total


@dataclass(frozen=True, eq=False)
class RocCurve:
    """ROC points ordered by decreasing threshold, from (0, 0) to (1, 1).

    Point ``k`` counts a trial as positive when its score is at least
    ``thresholds[k]``; the first point uses +inf.
    """

    thresholds: np.ndarray
    tpr: np.ndarray
    fpr: np.ndarray
    n_pos: int
    n_neg: int


def roc_curve(scores, labels) -> RocCurve:
    """Sweep the distinct scores from high to low; tied scores move together."""
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels, dtype=bool).ravel()
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    n_pos = int(y.sum())
    n_neg = int(y.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise SingleClassLabels(f"ROC needs both classes (positives={n_pos}, negatives={n_neg})")
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    # last index of each run of equal scores
    ends = np.r_[np.flatnonzero(s[1:] != s[:-1]), s.size - 1]
    tp = np.cumsum(y)[ends]
    fp = (ends + 1) - tp
    return RocCurve(
        thresholds=np.r_[np.inf, s[ends]],
        tpr=np.r_[0, tp] / n_pos,
        fpr=np.r_[0, fp] / n_neg,
        n_pos=n_pos,
        n_neg=n_neg,
    )


def auc(curve: RocCurve) -> float:
    """Trapezoidal area under the curve."""
    dx = np.diff(curve.fpr)
    return float(np.sum(dx * (curve.tpr[1:] + curve.tpr[:-1]) / 2.0))


def eer_point(curve: RocCurve) -> tuple[float, float, float]:
    """(eer, fpr*, tpr*) where the curve crosses fpr = 1 - tpr.

    The crossing is interpolated linearly between the two bracketing ROC
    points; ``eer`` is the mean of fpr* and 1 - tpr*, which agree up to
    rounding.
    """
    gap = curve.fpr + curve.tpr - 1.0  # non-decreasing, -1 at start, +1 at end
    k = int(np.argmax(gap >= 0.0))
    if gap[k] == 0.0 or k == 0:
        f, t = float(curve.fpr[k]), float(curve.tpr[k])
    else:
        w = -gap[k - 1] / (gap[k] - gap[k - 1])
        f = float(curve.fpr[k - 1] + w * (curve.fpr[k] - curve.fpr[k - 1]))
        t = float(curve.tpr[k - 1] + w * (curve.tpr[k] - curve.tpr[k - 1]))
    return (f + 1.0 - t) / 2.0, f, t


def eer(curve: RocCurve) -> float:
    return eer_point(curve)[0]


def r2_score(y_true, y_pred) -> float:
    y = np.asarray(y_true, dtype=np.float64)
    p = np.asarray(y_pred, dtype=np.float64)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum((y - p) ** 2))
    if ss_tot == 0.0:
        return 1.0 if ss_res == 0.0 else float("-inf")
    return 1.0 - ss_res / ss_tot

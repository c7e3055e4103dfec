"""Confusion accounting, Sensitivity/Specificity/Accuracy/F-score, and the
empirical ROC curve with its Mann-Whitney AUC.

Every ratio with a zero denominator is reported as 0.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
from scipy.stats import rankdata

from errors import LengthMismatchError, OneClassOnlyError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def as_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn}


@dataclass(frozen=True)
class RocCurve:
    """(false-positive-rate, true-positive-rate) points from (0, 0) to (1, 1)."""
    points: Tuple[Tuple[float, float], ...]
    auc: float


def _paired(predictions: Sequence, truth: Sequence) -> Tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(predictions)
    true = np.asarray(truth)
    if pred.shape != true.shape or pred.ndim != 1:
        raise LengthMismatchError(f"predictions {pred.shape} and truth {true.shape} differ in length")
    if pred.shape[0] == 0:
        raise LengthMismatchError("no samples to evaluate")
    return pred, true


def _ratio(numerator: int, denominator: int) -> float:
    if denominator == 0:
        return 0.0
    return numerator / denominator


def confusion(predictions: Sequence[int], truth: Sequence[int], positive_class: int = 1) -> ConfusionCounts:
    pred, true = _paired(predictions, truth)
    pred_pos = pred == positive_class
    true_pos = true == positive_class
    return ConfusionCounts(
        tp=int(np.count_nonzero(pred_pos & true_pos)),
        fp=int(np.count_nonzero(pred_pos & ~true_pos)),
        tn=int(np.count_nonzero(~pred_pos & ~true_pos)),
        fn=int(np.count_nonzero(~pred_pos & true_pos)),
    )


def sensitivity(counts: ConfusionCounts) -> float:
    return _ratio(counts.tp, counts.tp + counts.fn)


def specificity(counts: ConfusionCounts) -> float:
    return _ratio(counts.tn, counts.tn + counts.fp)


def accuracy(counts: ConfusionCounts) -> float:
    return _ratio(counts.tp + counts.tn, counts.total)


def f_score(counts: ConfusionCounts) -> float:
    return _ratio(2 * counts.tp, 2 * counts.tp + counts.fn + counts.fp)


def roc_auc(scores: Sequence[float], truth: Sequence[int], positive_class: int = 1) -> RocCurve:
    """Empirical ROC curve and its area.

    The area is the Mann-Whitney estimate: the share of (positive, negative)
    pairs where the positive scores higher, ties counting one half.

    Raises:
        OneClassOnlyError: the truth holds only one class
    """
    values, true = _paired(scores, truth)
    values = values.astype(np.float64)
    is_pos = true == positive_class
    n_pos = int(np.count_nonzero(is_pos))
    n_neg = int(is_pos.shape[0] - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise OneClassOnlyError(f"ROC needs both classes, got {n_pos} positive and {n_neg} negative")

    ranks = rankdata(values, method="average")
    auc = (ranks[is_pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)

    order = np.argsort(-values, kind="stable")
    sorted_values = values[order]
    tps = np.cumsum(is_pos[order])
    fps = np.cumsum(~is_pos[order])
    # one point per distinct threshold: the last position of each run of equal scores
    last = np.r_[np.nonzero(np.diff(sorted_values))[0], sorted_values.shape[0] - 1]
    points = [(0.0, 0.0)]
    points.extend((fps[i] / n_neg, tps[i] / n_pos) for i in last)
    return RocCurve(points=tuple((float(f), float(t)) for f, t in points), auc=float(auc))


def write_roc(curve: RocCurve, path: str) -> None:
    """Write `fpr,tpr` lines followed by an `# auc=` footer."""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", newline="") as handle:
        handle.write("fpr,tpr\n")
        for fpr, tpr in curve.points:
            handle.write(f"{fpr!r},{tpr!r}\n")
        handle.write(f"# auc={curve.auc!r}\n")


def read_roc(path: str) -> RocCurve:
    points = []
    auc = float("nan")
    with open(path, "r", newline="") as handle:
        for line in handle:
            line = line.strip()
            if not line or line == "fpr,tpr":
                continue
            if line.startswith("# auc="):
                auc = float(line[len("# auc="):])
                continue
            fpr, tpr = line.split(",")
            points.append((float(fpr), float(tpr)))
    return RocCurve(points=tuple(points), auc=auc)

"""Multi-label classification metrics.

Term-centric macro AUC (tie-corrected rank statistic), the sample-centric
precision/recall/F1 sweep with Fmax, weighted confusion counts with the
Fbeta/Gbeta family, threshold optimization, and the regression/binary
helpers for the age, gender and signal-quality tasks.

Everything is pure, reentrant, and summed in fixed index order so results
are bitwise reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from .records import LabelMatrix, PredictionMatrix, align


class UndefinedMetricError(ValueError):
    """A metric is undefined on the given inputs (e.g. single-class AUC)."""


@dataclass(frozen=True)
class ThresholdGrid:
    """Ordered thresholds in [0, 1]; default is the 101-point 0.01 grid."""

    values: tuple[float, ...]

    def __post_init__(self):
        vals = self.values
        if not vals:
            raise ValueError("threshold grid must be nonempty")
        if any(not 0.0 <= v <= 1.0 for v in vals):
            raise ValueError("thresholds must lie in [0, 1]")
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ValueError("thresholds must be strictly increasing")

    @classmethod
    def default(cls) -> "ThresholdGrid":
        return cls(values=tuple(np.arange(101) / 100.0))

    @classmethod
    def exact(cls, preds: PredictionMatrix) -> "ThresholdGrid":
        """Sweep every distinct score value instead of the fixed grid."""
        return cls(values=tuple(np.unique(preds.scores)))


@dataclass(frozen=True)
class ConfusionCounts:
    """Per-class weighted TP/FP/FN/TN cells at a fixed threshold."""

    class_codes: tuple[str, ...]
    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray
    tn: np.ndarray

    def __post_init__(self):
        for name in ("tp", "fp", "fn", "tn"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != (len(self.class_codes),):
                raise ValueError(f"{name} must have one entry per class")
            if (arr < 0).any():
                raise ValueError(f"{name} counts must be nonnegative")
            object.__setattr__(self, name, arr)


def class_auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """ROC AUC as the tie-corrected Mann-Whitney rank statistic.

    Equals the mean over positive-negative pairs of 1/0.5/0 for
    concordant/tied/discordant scores. Raises for single-class labels.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be equal-length vectors")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC undefined: labels contain a single class")
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores), dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j < len(scores) and sorted_scores[j] == sorted_scores[i]:
            j += 1
        ranks[order[i:j]] = 0.5 * (i + 1 + j)  # average rank of the tie group
        i = j
    rank_sum = ranks[pos].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def macro_auc(
    preds: PredictionMatrix,
    labels: LabelMatrix,
    on_undefined: str = "error",
) -> tuple[np.ndarray, float]:
    """Unweighted mean of per-class AUCs.

    ``on_undefined`` controls classes without both label values: "error"
    (default) raises naming them, "skip" excludes them (NaN in the
    per-class vector) from the macro mean.
    """
    if on_undefined not in ("error", "skip"):
        raise ValueError("on_undefined must be 'error' or 'skip'")
    preds = align(preds, labels)
    per_class = np.full(labels.n_classes, np.nan)
    bad: list[str] = []
    for j, code in enumerate(labels.class_codes):
        try:
            per_class[j] = class_auc(preds.scores[:, j], labels.values[:, j])
        except UndefinedMetricError:
            bad.append(code)
    if bad and on_undefined == "error":
        raise UndefinedMetricError(
            f"AUC undefined for classes without both label values: {bad}"
        )
    defined = per_class[~np.isnan(per_class)]
    if defined.size == 0:
        raise UndefinedMetricError("AUC undefined for every class")
    return per_class, float(defined.mean())


class PrRc(NamedTuple):
    """Sample-centric precision/recall at one threshold.

    ``pr`` is None when no record predicts anything at the threshold
    (precision undefined, N_tau = 0).
    """

    pr: Optional[float]
    rc: float
    n_tau: int


def sample_pr_rc(preds: PredictionMatrix, labels: LabelMatrix, tau: float) -> PrRc:
    """Sample-centric precision and recall at threshold ``tau``.

    A class is predicted when its score >= tau. Precision is averaged only
    over the records with at least one prediction; recall over all records.
    Every evaluated record must carry at least one true label.
    """
    preds = align(preds, labels)
    truth = labels.values == 1.0
    t_sizes = truth.sum(axis=1)
    if (t_sizes == 0).any():
        raise ValueError("sample_pr_rc: every record must have at least one true label")
    predicted = preds.scores >= tau
    p_sizes = predicted.sum(axis=1)
    inter = (predicted & truth).sum(axis=1)
    with_preds = p_sizes > 0
    n_tau = int(with_preds.sum())
    pr = float((inter[with_preds] / p_sizes[with_preds]).mean()) if n_tau else None
    rc = float((inter / t_sizes).mean())
    return PrRc(pr=pr, rc=rc, n_tau=n_tau)


class FmaxResult(NamedTuple):
    fmax: float
    threshold: float


def f1_at(preds: PredictionMatrix, labels: LabelMatrix, tau: float) -> float:
    """F1(tau) from sample-centric pr/rc; 0 when pr is undefined or pr+rc=0."""
    pr, rc, _ = sample_pr_rc(preds, labels, tau)
    if pr is None or pr + rc == 0.0:
        return 0.0
    return 2.0 * pr * rc / (pr + rc)


def fmax(
    preds: PredictionMatrix,
    labels: LabelMatrix,
    grid: Optional[ThresholdGrid] = None,
) -> FmaxResult:
    """Maximum F1(tau) over the grid; ties go to the smaller threshold.

    Follows the black-box convention of optimizing tau on the evaluated set
    itself.
    """
    if grid is None:
        grid = ThresholdGrid.default()
    best_f1 = -1.0
    best_tau = grid.values[0]
    for tau in grid.values:
        f1 = f1_at(preds, labels, tau)
        if f1 > best_f1:
            best_f1 = f1
            best_tau = tau
    return FmaxResult(fmax=best_f1, threshold=best_tau)


def weighted_confusion(
    preds: PredictionMatrix, labels: LabelMatrix, tau: float
) -> ConfusionCounts:
    """Per-class confusion cells with record weight 1/max(1, #true labels)."""
    preds = align(preds, labels)
    truth = labels.values == 1.0
    predicted = preds.scores >= tau
    w = 1.0 / np.maximum(1.0, truth.sum(axis=1))
    tp = w @ (predicted & truth)
    fp = w @ (predicted & ~truth)
    fn = w @ (~predicted & truth)
    tn = w @ (~predicted & ~truth)
    return ConfusionCounts(class_codes=labels.class_codes, tp=tp, fp=fp, fn=fn, tn=tn)


def f_beta(counts: ConfusionCounts, beta: float) -> tuple[np.ndarray, float]:
    """Macro Fbeta = (1+b^2)TP / ((1+b^2)TP + FP + b^2 FN); 0 on empty classes."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    b2 = beta * beta
    num = (1.0 + b2) * counts.tp
    den = (1.0 + b2) * counts.tp + counts.fp + b2 * counts.fn
    per_class = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
    return per_class, float(per_class.mean())


def g_beta(counts: ConfusionCounts, beta: float) -> tuple[np.ndarray, float]:
    """Macro Gbeta = TP / (TP + FP + b*FN); 0 on empty classes."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    den = counts.tp + counts.fp + beta * counts.fn
    per_class = np.divide(counts.tp, den, out=np.zeros_like(counts.tp), where=den > 0)
    return per_class, float(per_class.mean())


def optimize_threshold(
    preds: PredictionMatrix,
    labels: LabelMatrix,
    metric: str = "fbeta",
    beta: float = 2.0,
    grid: Optional[ThresholdGrid] = None,
) -> float:
    """Single global threshold maximizing macro Fbeta or Gbeta on the given
    (training) data; ties go to the smaller threshold."""
    if metric not in ("fbeta", "gbeta"):
        raise ValueError("metric must be 'fbeta' or 'gbeta'")
    if grid is None:
        grid = ThresholdGrid.default()
    score_fn = f_beta if metric == "fbeta" else g_beta
    best_value = -1.0
    best_tau = grid.values[0]
    for tau in grid.values:
        _, value = score_fn(weighted_confusion(preds, labels, tau), beta)
        if value > best_value:
            best_value = value
            best_tau = tau
    return best_tau


def regression_metrics(predictions: np.ndarray, targets: np.ndarray) -> tuple[float, float]:
    """Mean absolute error and R-squared (test-set target mean in SS_tot)."""
    predictions = np.asarray(predictions, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if predictions.shape != targets.shape or predictions.ndim != 1:
        raise ValueError("predictions and targets must be equal-length vectors")
    if len(targets) < 2:
        raise ValueError("need at least two samples")
    ss_tot = float(((targets - targets.mean()) ** 2).sum())
    if ss_tot == 0.0:
        raise UndefinedMetricError("R^2 undefined: targets are constant")
    mae = float(np.abs(predictions - targets).mean())
    r2 = 1.0 - float(((predictions - targets) ** 2).sum()) / ss_tot
    return mae, r2


def binary_metrics(
    scores: np.ndarray, labels: np.ndarray, tau: float = 0.5
) -> tuple[float, float]:
    """Accuracy at ``tau`` (score >= tau predicts positive) and ROC AUC."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    acc = float(((scores >= tau) == (labels == 1)).mean())
    return acc, class_auc(scores, labels)


def roc_points(scores: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(fpr, tpr) series over all distinct score thresholds, plot-ready.

    Points are ordered from (0, 0) to (1, 1).
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("ROC undefined: labels contain a single class")
    thresholds = np.unique(scores)[::-1]
    fpr = [0.0]
    tpr = [0.0]
    for t in thresholds:
        predicted = scores >= t
        tpr.append(float((predicted & pos).sum() / n_pos))
        fpr.append(float((predicted & ~pos).sum() / n_neg))
    return np.array(fpr), np.array(tpr)

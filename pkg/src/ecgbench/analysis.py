"""Hidden-stratification clustering and ensemble-uncertainty analyses.

``stratify_class`` clusters the output-probability vectors of a class's
positive records and scores each cluster against the common negative pool,
surfacing subpopulations whose performance the class-level AUC hides.
``ensemble_uncertainty`` and ``uncertainty_vs_likelihood`` relate the spread
of an ensemble's predictions to the annotator-assigned diagnosis likelihood.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .metrics import class_auc
from .records import LabelMatrix, PredictionMatrix, _reorder

LIKELIHOOD_BUCKETS = (15.0, 35.0, 50.0, 80.0, 100.0)

QUANTILE_LEVELS = (5.0, 25.0, 50.0, 75.0, 95.0)


class KMeansResult(NamedTuple):
    labels: np.ndarray
    centroids: np.ndarray
    inertia: float
    inertia_history: tuple[float, ...]


def _sq_dists(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - centroids[None, :, :]
    return (diff * diff).sum(axis=2)


def kmeans(
    points: np.ndarray,
    k: int,
    seed: int = 0,
    max_iter: int = 300,
    tol: float = 1e-6,
) -> KMeansResult:
    """Lloyd's algorithm from k-means++-style seeded centroids.

    Deterministic given the seed; converges when the largest centroid shift
    drops below ``tol``. Per-iteration inertia is returned so callers can
    check it never increases.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise ValueError("points must be an N x D matrix")
    n, d = points.shape
    if d == 0:
        raise ValueError("points must have at least one dimension")
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    rng = np.random.Generator(np.random.PCG64(seed))

    # k-means++ seeding: next centroid drawn proportional to squared distance
    centroids = np.empty((k, d))
    centroids[0] = points[rng.integers(n)]
    closest = ((points - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = closest.sum()
        if total <= 0:
            centroids[j] = points[rng.integers(n)]
        else:
            r = rng.random() * total
            centroids[j] = points[np.searchsorted(np.cumsum(closest), r)]
        closest = np.minimum(closest, ((points - centroids[j]) ** 2).sum(axis=1))

    labels = np.zeros(n, dtype=np.intp)
    history: list[float] = []
    for _ in range(max_iter):
        dists = _sq_dists(points, centroids)
        labels = dists.argmin(axis=1)
        history.append(float(dists[np.arange(n), labels].sum()))
        new_centroids = centroids.copy()
        for j in range(k):
            members = labels == j
            if members.any():
                new_centroids[j] = points[members].mean(axis=0)
            else:
                # deterministic re-seed: the point farthest from its centroid
                new_centroids[j] = points[int(dists[np.arange(n), labels].argmax())]
        shift = np.abs(new_centroids - centroids).max()
        centroids = new_centroids
        if shift < tol:
            break
    dists = _sq_dists(points, centroids)
    labels = dists.argmin(axis=1)
    inertia = float(dists[np.arange(n), labels].sum())
    history.append(inertia)
    return KMeansResult(
        labels=labels,
        centroids=centroids,
        inertia=inertia,
        inertia_history=tuple(history),
    )


@dataclass(frozen=True)
class ClusterAssignment:
    record_ids: tuple[str, ...]
    cluster: np.ndarray
    k: int
    inertia: float

    def __post_init__(self):
        cluster = np.asarray(self.cluster, dtype=np.intp)
        if cluster.shape != (len(self.record_ids),):
            raise ValueError("one cluster index per record required")
        if cluster.size and (cluster.min() < 0 or cluster.max() >= self.k):
            raise ValueError("cluster indices must lie in [0, k)")
        object.__setattr__(self, "cluster", cluster)


@dataclass(frozen=True)
class ClusterStats:
    cluster: int
    size: int
    auc: Optional[float]
    cooccurrence: dict[str, float]  # label -> frequency among the cluster's positives


@dataclass(frozen=True)
class StratificationReport:
    target_class: str
    overall_auc: float
    assignment: ClusterAssignment
    clusters: tuple[ClusterStats, ...]
    degenerate: bool  # all positive prediction vectors identical


def stratify_class(
    preds: PredictionMatrix,
    labels: LabelMatrix,
    target_class: str,
    k: int = 2,
    seed: int = 0,
    class_subset: Optional[Sequence[str]] = None,
) -> StratificationReport:
    """Cluster a class's positives by their full output-probability vectors
    and report per-cluster AUC against the common negative pool.

    ``class_subset`` optionally restricts the clustering feature space to a
    subset of class scores.
    """
    preds = _reorder(preds, labels.record_ids, labels.class_codes)
    if target_class not in labels.class_codes:
        raise ValueError(f"unknown target class {target_class!r}")
    t = labels.class_codes.index(target_class)
    truth = labels.values[:, t] == 1.0
    pos_idx = np.flatnonzero(truth)
    if len(pos_idx) == 0:
        raise ValueError(f"class {target_class!r} has no positive records")
    if len(pos_idx) < k:
        raise ValueError(
            f"class {target_class!r} has {len(pos_idx)} positives, fewer than k={k}"
        )
    if class_subset is None:
        feature_cols = np.arange(labels.n_classes)
    else:
        feature_cols = np.array([labels.class_codes.index(c) for c in class_subset])
    features = preds.scores[np.ix_(pos_idx, feature_cols)]

    degenerate = bool(np.ptp(features, axis=0).max(initial=0.0) == 0.0)
    if degenerate:
        cluster = np.zeros(len(pos_idx), dtype=np.intp)
        inertia = 0.0
        k_effective = 1
    else:
        result = kmeans(features, k=k, seed=seed)
        cluster = result.labels
        inertia = result.inertia
        k_effective = k

    assignment = ClusterAssignment(
        record_ids=tuple(labels.record_ids[i] for i in pos_idx),
        cluster=cluster,
        k=k_effective,
        inertia=inertia,
    )
    target_scores = preds.scores[:, t]
    overall_auc = class_auc(target_scores, labels.values[:, t])
    neg_idx = np.flatnonzero(~truth)
    clusters: list[ClusterStats] = []
    for c in range(k_effective):
        members = pos_idx[cluster == c]
        subset = np.concatenate([members, neg_idx])
        sub_labels = np.zeros(len(subset))
        sub_labels[: len(members)] = 1.0
        auc = class_auc(target_scores[subset], sub_labels) if len(members) else None
        cooc = {
            code: float(labels.values[members, j].mean()) if len(members) else 0.0
            for j, code in enumerate(labels.class_codes)
        }
        clusters.append(
            ClusterStats(cluster=c, size=int(len(members)), auc=auc, cooccurrence=cooc)
        )
    return StratificationReport(
        target_class=target_class,
        overall_auc=overall_auc,
        assignment=assignment,
        clusters=tuple(clusters),
        degenerate=degenerate,
    )


def ensemble_uncertainty(
    preds: Sequence[PredictionMatrix],
) -> tuple[PredictionMatrix, np.ndarray]:
    """Elementwise ensemble mean and sample standard deviation (divisor M-1)."""
    if len(preds) < 2:
        raise ValueError("ensemble uncertainty needs at least 2 members")
    first = preds[0]
    aligned = np.stack(
        [_reorder(p, first.record_ids, first.class_codes).scores for p in preds]
    )
    mean = PredictionMatrix(
        record_ids=first.record_ids,
        class_codes=first.class_codes,
        scores=aligned.mean(axis=0),
    )
    return mean, aligned.std(axis=0, ddof=1)


@dataclass(frozen=True)
class UncertaintyRow:
    record_id: str
    class_code: str
    likelihood: float
    ensemble_mean: float
    ensemble_std: float


@dataclass(frozen=True)
class BucketSummary:
    likelihood: float
    count: int
    quantiles: Optional[tuple[float, ...]]  # 5/25/50/75/95% of ensemble std


@dataclass(frozen=True)
class UncertaintyTable:
    rows: tuple[UncertaintyRow, ...]
    buckets: tuple[BucketSummary, ...]


def uncertainty_vs_likelihood(
    std: np.ndarray,
    labels: LabelMatrix,
    means: Optional[np.ndarray] = None,
) -> UncertaintyTable:
    """One row per positive (record, class) pair with a nonzero recorded
    likelihood, plus per-bucket std quantiles (boxplot-ready).

    Buckets are the discrete likelihood values; the canonical five are always
    emitted (count 0 when empty) alongside any other observed values.
    """
    if labels.likelihoods is None:
        raise ValueError("label matrix has no likelihoods")
    std = np.asarray(std, dtype=np.float64)
    if std.shape != labels.values.shape:
        raise ValueError("std matrix must be aligned with the label matrix")
    if (std < 0).any():
        raise ValueError("standard deviations must be nonnegative")
    if means is not None:
        means = np.asarray(means, dtype=np.float64)
        if means.shape != labels.values.shape:
            raise ValueError("mean matrix must be aligned with the label matrix")
    rows: list[UncertaintyRow] = []
    pos = (labels.values == 1.0) & (labels.likelihoods > 0.0)
    for i, j in zip(*np.nonzero(pos)):
        rows.append(
            UncertaintyRow(
                record_id=labels.record_ids[i],
                class_code=labels.class_codes[j],
                likelihood=float(labels.likelihoods[i, j]),
                ensemble_mean=float(means[i, j]) if means is not None else float("nan"),
                ensemble_std=float(std[i, j]),
            )
        )
    if not rows:
        raise ValueError("no positive (record, class) pairs with a recorded likelihood")
    bucket_values = sorted(set(LIKELIHOOD_BUCKETS) | {r.likelihood for r in rows})
    buckets: list[BucketSummary] = []
    for value in bucket_values:
        stds = np.array([r.ensemble_std for r in rows if r.likelihood == value])
        if stds.size == 0:
            buckets.append(BucketSummary(likelihood=value, count=0, quantiles=None))
        else:
            qs = tuple(float(q) for q in np.percentile(stds, QUANTILE_LEVELS))
            buckets.append(BucketSummary(likelihood=value, count=int(stds.size), quantiles=qs))
    return UncertaintyTable(rows=tuple(rows), buckets=tuple(buckets))

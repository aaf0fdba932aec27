"""Diversity and quality metrics on embedded samples.

All metrics work on feature rows ``E_I(x)`` in the frozen embedding space,
which stands in for a perceptual feature space: distances are Euclidean.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, fields

import numpy as np

from . import kernels
from .rng import make_rng

log = logging.getLogger(__name__)


class UndefinedMetricError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureSet:
    rows: np.ndarray
    label: str = ""

    def __post_init__(self):
        rows = np.atleast_2d(np.asarray(self.rows, dtype=np.float64))
        if rows.shape[0] < 1 or not np.all(np.isfinite(rows)):
            raise ValueError("a feature set needs at least one finite row")
        object.__setattr__(self, "rows", rows)

    def __len__(self):
        return self.rows.shape[0]


def _rows(F) -> np.ndarray:
    return F.rows if isinstance(F, FeatureSet) else FeatureSet(F).rows


@dataclass(frozen=True)
class ClusterAssignment:
    medoids: np.ndarray
    membership: np.ndarray
    cost: float
    cost_history: tuple = ()


@dataclass
class MetricsReport:
    """One row of a training log. Metrics not computed at this iteration are ``None``."""

    iter: int
    loss_dir: float | None = None
    loss_dm: float | None = None
    loss_ewc: float | None = None
    loss_rel: float | None = None
    loss_total: float | None = None
    sse: float | None = None
    diversity_avg: float | None = None
    diversity_all: float | None = None
    frechet: float | None = None
    precision: float | None = None
    recall: float | None = None

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    @property
    def has_metrics(self) -> bool:
        return self.sse is not None


def sse_compactness(F) -> float:
    X = _rows(F)
    return float(np.sum((X - X.mean(axis=0)) ** 2))


def kmedoids(F, k: int, max_iters: int = 100, seed: int = 0, n_init: int = 8) -> ClusterAssignment:
    """PAM: greedy BUILD plus ``n_init - 1`` seeded random starts, each refined by swaps.

    The lowest-cost result is kept; equal costs go to the lexicographically
    smallest sorted medoid set.
    """
    X = _rows(F)
    S = X.shape[0]
    if not 1 <= k <= S:
        raise ValueError(f"k={k} must lie in [1, {S}]")
    D = kernels.pairwise_distances(X)
    rng = make_rng(seed, "kmedoids")
    best = None
    for start in range(max(1, n_init) if k < S else 1):
        init = kernels.pam_build(D, k) if start == 0 else rng.choice(S, size=k, replace=False)
        medoids, costs = kernels.pam_swap(D, init, max_iters)
        if best is None or _better(costs[-1], medoids, best[1][-1], best[0]):
            best = (medoids, costs)
    medoids, costs = best
    membership = kernels.assign(D, medoids)
    return ClusterAssignment(np.asarray(medoids), membership, float(costs[-1]), tuple(costs))


def _better(cost, medoids, best_cost, best_medoids) -> bool:
    if cost != best_cost:
        return cost < best_cost
    return sorted(medoids.tolist()) < sorted(best_medoids.tolist())


def cluster_pair_distances(D: np.ndarray, membership: np.ndarray) -> list[np.ndarray]:
    """Within-cluster pair distances, one array per cluster with at least two members."""
    out = []
    for c in np.unique(membership):
        idx = np.flatnonzero(membership == c)
        if len(idx) >= 2:
            out.append(D[np.ix_(idx, idx)][np.triu_indices(len(idx), k=1)])
    return out


def cluster_diversity(D: np.ndarray, membership: np.ndarray) -> tuple[float, float]:
    """(avg, all): mean of per-cluster mean pair distances, and mean over pooled pairs."""
    pairs = cluster_pair_distances(D, membership)
    if not pairs:
        raise UndefinedMetricError("every cluster is a singleton; intra-cluster diversity is undefined")
    return float(np.mean([p.mean() for p in pairs])), float(np.concatenate(pairs).mean())


def intra_cluster_diversity(F, k: int = 10, seed: int = 0, n_init: int = 8) -> tuple[float, float]:
    X = _rows(F)
    clusters = kmedoids(X, k, seed=seed, n_init=n_init)
    return cluster_diversity(kernels.pairwise_distances(X), clusters.membership)


def diversity_pair_std(F, k: int = 10, seed: int = 0, n_init: int = 8) -> float:
    """Standard deviation over the pooled intra-cluster pairs (the spread behind "all")."""
    X = _rows(F)
    clusters = kmedoids(X, k, seed=seed, n_init=n_init)
    pairs = cluster_pair_distances(kernels.pairwise_distances(X), clusters.membership)
    if not pairs:
        raise UndefinedMetricError("every cluster is a singleton; intra-cluster diversity is undefined")
    return float(np.concatenate(pairs).std())


def _sqrtm_psd(A: np.ndarray) -> np.ndarray:
    try:
        w, V = np.linalg.eigh((A + A.T) / 2.0)
    except np.linalg.LinAlgError as exc:
        raise ArithmeticError(f"eigendecomposition did not converge: {exc}") from exc
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T


def frechet_distance(A, B) -> float:
    """Frechet distance between Gaussian fits (unbiased covariance) of two feature sets."""
    XA, XB = _rows(A), _rows(B)
    if len(XA) < 2 or len(XB) < 2:
        raise ValueError("each set needs at least two rows to fit a covariance")
    muA, muB = XA.mean(axis=0), XB.mean(axis=0)
    covA = np.atleast_2d(np.cov(XA, rowvar=False))
    covB = np.atleast_2d(np.cov(XB, rowvar=False))
    rootA = _sqrtm_psd(covA)
    cross = _sqrtm_psd(rootA @ covB @ rootA)
    d = float(np.sum((muA - muB) ** 2) + np.trace(covA) + np.trace(covB) - 2.0 * np.trace(cross))
    return max(d, 0.0)


def knn_radii(X: np.ndarray, k: int) -> np.ndarray:
    """Distance from each row to its k-th nearest other row."""
    D = kernels.pairwise_distances(X)
    np.fill_diagonal(D, np.inf)
    return np.partition(D, k - 1, axis=1)[:, k - 1]


def _coverage(ref: np.ndarray, radii: np.ndarray, query: np.ndarray) -> float:
    D = kernels.pairwise_distances(query, ref)
    return float(np.mean(np.any(D <= radii[None, :], axis=1)))


def precision_recall(real, fake, k: int = 3) -> tuple[float, float]:
    """k-NN manifold precision (fake inside real manifold) and recall (real inside fake)."""
    R, G = _rows(real), _rows(fake)
    if k < 1 or len(R) <= k or len(G) <= k:
        raise ValueError(f"both sets need more than k={k} rows")
    precision = _coverage(R, knn_radii(R, k), G)
    recall = _coverage(G, knn_radii(G, k), R)
    return precision, recall

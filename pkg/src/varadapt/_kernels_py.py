"""Pure numpy implementations of the distance and k-medoids kernels.

These are the reference versions; ``_kernels.pyx`` mirrors them loop for loop.
"""

from __future__ import annotations

import numpy as np


def pairwise_distances(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=np.float64)
    Y = np.ascontiguousarray(Y, dtype=np.float64)
    out = np.empty((X.shape[0], Y.shape[0]))
    # row blocks keep the broadcast temporary small
    step = max(1, 2_000_000 // max(1, Y.shape[0] * X.shape[1]))
    for s in range(0, X.shape[0], step):
        diff = X[s:s + step, None, :] - Y[None, :, :]
        out[s:s + step] = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    return out


def pam_build(D: np.ndarray, k: int) -> np.ndarray:
    """Greedy BUILD: repeatedly add the point that lowers total cost most (lowest index on ties)."""
    S = D.shape[0]
    medoids = [int(np.argmin(D.sum(axis=1)))]
    nearest = D[medoids[0]].copy()
    chosen = np.zeros(S, dtype=bool)
    chosen[medoids[0]] = True
    for _ in range(1, k):
        gain = np.maximum(nearest[None, :] - D, 0.0).sum(axis=1)
        gain[chosen] = -1.0
        best = int(np.argmax(gain))
        medoids.append(best)
        chosen[best] = True
        nearest = np.minimum(nearest, D[best])
    return np.array(medoids, dtype=np.int64)


def _nearest_two(D: np.ndarray, medoids: np.ndarray):
    sub = D[medoids]  # k x S
    order = np.argsort(sub, axis=0, kind="stable")
    n1 = order[0]
    cols = np.arange(D.shape[0])
    d1 = sub[n1, cols]
    d2 = sub[order[1], cols] if len(medoids) > 1 else np.full(D.shape[0], np.inf)
    return n1, d1, d2


def pam_swap(D: np.ndarray, medoids: np.ndarray, max_iter: int):
    """Best-improvement swaps until none lowers the cost; returns (medoids, cost per iteration).

    Once no swap lowers the cost, swaps that leave it exactly unchanged are
    still taken when they replace a medoid by a lower-indexed point, so ties
    resolve toward low indices. The index sum falls with each, so this ends.
    """
    medoids = np.array(medoids, dtype=np.int64)
    S = D.shape[0]
    k = len(medoids)
    n1, d1, d2 = _nearest_two(D, medoids)
    costs = [float(d1.sum())]
    if k == S:
        return medoids, costs
    for _ in range(max_iter):
        is_med = np.zeros(S, dtype=bool)
        is_med[medoids] = True
        best_delta, best, tie = 0.0, None, None
        for pos in range(k):
            own = n1 == pos
            # delta[o, j] for replacing medoid `pos` by candidate o
            alt = np.where(own, d2, d1)
            delta = (np.minimum(D, alt[None, :]) - d1[None, :]).sum(axis=1)
            delta[is_med] = np.inf
            o = int(np.argmin(delta))
            if delta[o] < best_delta - 1e-12 * max(1.0, abs(costs[-1])):
                best_delta, best = float(delta[o]), (pos, o)
            # cost-neutral swap to a lower index (tie-break toward low indices)
            lower = np.flatnonzero(delta[:medoids[pos]] <= 0.0)
            if lower.size and (tie is None or lower[0] < tie[1]):
                tie = (pos, int(lower[0]))
        if best is None:
            best = tie
        if best is None:
            break
        medoids[best[0]] = best[1]
        n1, d1, d2 = _nearest_two(D, medoids)
        costs.append(float(d1.sum()))
    return medoids, costs


def assign(D: np.ndarray, medoids: np.ndarray) -> np.ndarray:
    """Nearest-medoid cluster ids; each medoid always belongs to its own cluster."""
    member = np.argmin(D[medoids], axis=0)
    member[medoids] = np.arange(len(medoids))
    return member.astype(np.int64)

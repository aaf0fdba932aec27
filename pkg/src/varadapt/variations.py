"""Stage 1: learn K semantic variations of a target text embedding.

Each learnable vector ``z_i`` perturbs the target ``t`` on a sphere of radius
``eps``: ``v_i = t + eps * z_i / |z_i|``. Training balances a consistency term
(mean cosine distance between ``t`` and each ``v_i``) against a diversity term
(mean absolute pairwise cosine between the ``z_i``).
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Graph, NumericError, Var
from .optim import Adam, BETAS, LR
from .rng import make_rng

log = logging.getLogger(__name__)

MIN_NORM = 1e-8


class DegenerateError(ValueError):
    """A zero or near-zero vector where a direction is required."""


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class VariationSet:
    target: np.ndarray
    Z: np.ndarray
    epsilon: float
    history: list = field(default_factory=list, compare=False, repr=False)

    @property
    def K(self) -> int:
        return self.Z.shape[0]

    @property
    def V(self) -> np.ndarray:
        if self.K == 0:
            return np.zeros((0, self.target.shape[0]))
        return np.vstack([perturb(self.target, z, self.epsilon) for z in self.Z])


def perturb(target, z, eps: float) -> np.ndarray:
    target = np.asarray(target, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    n = float(np.linalg.norm(z))
    if n <= MIN_NORM:
        raise DegenerateError(f"perturbation vector norm {n:g} is too small")
    if eps <= 0:
        raise ValueError("eps must be positive")
    return target + eps * (z / n)


def perturb_graph(g: Graph, target: Var, Z: Var, eps: float) -> Var:
    """Rows ``target + eps * z_i / |z_i|``."""
    unit = g.mul(Z, g.reciprocal(g.l2norm(Z, axis=1)))
    return g.scale(unit, eps) + target


def cons_graph(g: Graph, target: Var, V: Var) -> Var:
    return 1.0 - g.mean(g.cosine(V, target))


def div_graph(g: Graph, Z: Var) -> Var:
    K = Z.shape[0]
    pairs = list(itertools.combinations(range(K), 2))
    left = np.zeros((len(pairs), K))
    right = np.zeros((len(pairs), K))
    for p, (i, j) in enumerate(pairs):
        left[p, i] = 1.0
        right[p, j] = 1.0
    cos = g.cosine(g.literal(left) @ Z, g.literal(right) @ Z)
    return g.mean(g.abs(cos))


def loss_cons(target, V) -> float:
    target = np.asarray(target, dtype=np.float64)
    V = np.atleast_2d(np.asarray(V, dtype=np.float64))
    if np.linalg.norm(target) <= 1e-12:
        raise DegenerateError("target embedding is the zero vector")
    g = Graph()
    cons_graph(g, g.const("t", target.shape), g.const("V", V.shape))
    return float(g.forward({"t": target, "V": V}).output)


def loss_div(Z) -> float:
    Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
    if Z.shape[0] < 2:
        log.warning("loss_div needs at least two vectors; returning 0")
        return 0.0
    if np.any(np.linalg.norm(Z, axis=1) <= MIN_NORM):
        raise DegenerateError("loss_div: zero perturbation vector")
    g = Graph()
    div_graph(g, g.const("Z", Z.shape))
    return float(g.forward({"Z": Z}).output)


def stage1_graph(target: np.ndarray, K: int, eps: float, lambda_div: float):
    """Graph of ``L_cons + lambda_div * L_div`` over leaf ``Z``; returns (graph, cons, div, total)."""
    g = Graph()
    t = g.const("target", target.shape)
    Z = g.leaf("Z", (K, target.shape[0]))
    cons = cons_graph(g, t, perturb_graph(g, t, Z, eps))
    div = div_graph(g, Z) if K >= 2 else None
    total = cons if div is None else cons + g.scale(div, lambda_div)
    return g, cons, div, total


@dataclass
class Stage1Config:
    iters: int = 2000
    lr: float = LR
    betas: tuple = BETAS
    lambda_div: float = 1.0
    seed: int = 0
    log_every: int = 100


def learn_variations(target, K: int, eps: float | None = None,
                     config: Stage1Config | None = None) -> VariationSet:
    """Optimize ``Z ~ Normal(0, 1)`` by Adam; ``eps`` defaults to ``|target|``."""
    config = config or Stage1Config()
    target = np.asarray(target, dtype=np.float64)
    D = target.shape[0]
    if K < 1:
        raise ConfigError("K must be >= 1")
    if K > D:
        raise ConfigError(f"K={K} exceeds embedding dimension D={D}; orthogonality is infeasible")
    eps = float(np.linalg.norm(target)) if eps is None else float(eps)
    if eps <= 0:
        raise ConfigError("perturbation strength must be positive")

    g, cons, div, total = stage1_graph(target, K, eps, config.lambda_div)
    Z = make_rng(config.seed, "stage1-init").standard_normal((K, D))
    opt = Adam(config.lr, config.betas)
    history = []
    for it in range(config.iters + 1):
        try:
            trace = g.forward({"target": target, "Z": Z})
        except NumericError as exc:
            raise NumericError(f"stage 1 diverged at iteration {it}: {exc}") from exc
        if it % config.log_every == 0 or it == config.iters:
            row = (it, float(trace[cons]), float(trace[div]) if div is not None else 0.0)
            history.append(row)
            log.debug("stage1 iter %d cons %.6f div %.6f", *row)
        if it == config.iters:
            break
        Z = opt.step({"Z": Z}, {"Z": trace.backward(total)["Z"]})["Z"]
        norms = np.linalg.norm(Z, axis=1)
        if np.any(norms <= MIN_NORM):
            log.warning("stage 1: renormalizing collapsed perturbation rows at iteration %d", it)
            Z = Z.copy()
            for i in np.flatnonzero(norms <= MIN_NORM):
                if norms[i] == 0.0:
                    Z[i] = make_rng(config.seed, "stage1-reinit", it, int(i)).standard_normal(D)
                Z[i] /= np.linalg.norm(Z[i])
    return VariationSet(target, Z, eps, history)

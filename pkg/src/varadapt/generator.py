"""Latent-to-data generator and its source-domain pretraining.

The generator is a dense ``Dw -> 64 -> 64 -> P`` network with tanh hidden
units and a linear output. It is pretrained to match the source domain by
minimizing the biased RBF-kernel MMD between generated and real batches.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .autodiff import Graph, NumericError, Var
from .optim import Adam, BETAS, LR
from .rng import make_rng
from .world import World, sample_domain

log = logging.getLogger(__name__)

LATENT_DIM = 8
HIDDEN = (64, 64)


@dataclass(frozen=True)
class GeneratorParams:
    """Named dense layers ``l1..lL``; ``arrays`` maps ``"lK.weight"``/``"lK.bias"`` to data.

    Weights are stored ``(out, in)``.
    """

    arrays: dict

    def __post_init__(self):
        names = self.layer_names
        if len(names) < 2:
            raise ValueError("a generator needs at least two layers")
        prev = None
        for n in names:
            w, b = self.arrays[f"{n}.weight"], self.arrays[f"{n}.bias"]
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ValueError(f"layer {n}: weight {w.shape} and bias {b.shape} do not match")
            if prev is not None and w.shape[1] != prev:
                raise ValueError(f"layer {n}: input width {w.shape[1]} != previous output {prev}")
            prev = w.shape[0]

    @property
    def layer_names(self) -> list[str]:
        return sorted({k.split(".")[0] for k in self.arrays}, key=lambda s: int(s[1:]))

    @property
    def Dw(self) -> int:
        return self.arrays["l1.weight"].shape[1]

    @property
    def P(self) -> int:
        return self.arrays[f"{self.layer_names[-1]}.weight"].shape[0]

    @property
    def n_params(self) -> int:
        return sum(a.size for a in self.arrays.values())

    def flat(self) -> np.ndarray:
        """All parameters in sorted-key order (matches ``FisherDiag.flat``)."""
        return np.concatenate([self.arrays[k].ravel() for k in sorted(self.arrays)])

    def replace(self, arrays: dict) -> "GeneratorParams":
        return GeneratorParams({k: np.array(arrays[k], dtype=np.float64) for k in self.arrays})


def init_generator(seed: int, P: int, Dw: int = LATENT_DIM, hidden=HIDDEN) -> GeneratorParams:
    rng = make_rng(seed, "generator-init")
    widths = [Dw, *hidden, P]
    arrays = {}
    for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:]), start=1):
        std = 1.0 / np.sqrt(fan_in)
        arrays[f"l{i}.weight"] = rng.normal(0.0, std, size=(fan_out, fan_in))
        arrays[f"l{i}.bias"] = rng.normal(0.0, std, size=fan_out)
    return GeneratorParams(arrays)


def generate(params: GeneratorParams, W) -> np.ndarray:
    W = np.asarray(W, dtype=np.float64)
    if W.ndim != 2 or W.shape[1] != params.Dw:
        raise ValueError(f"latents must be N x {params.Dw}, got {W.shape}")
    h = W
    names = params.layer_names
    for i, n in enumerate(names):
        h = h @ params.arrays[f"{n}.weight"].T + params.arrays[f"{n}.bias"]
        if i < len(names) - 1:
            h = np.tanh(h)
    return h


def generator_graph(g: Graph, params: GeneratorParams, W: Var, prefix: str,
                    trainable: bool) -> Var:
    """Append the generator to ``g`` with its arrays as inputs named ``prefix + key``."""
    declare = g.leaf if trainable else g.const
    if prefix + "l1.weight" not in g.inputs:
        for k, a in params.arrays.items():
            declare(prefix + k, a.shape)
    h = W
    names = params.layer_names
    for i, n in enumerate(names):
        h = h @ g.var(f"{prefix}{n}.weight").T + g.var(f"{prefix}{n}.bias")
        if i < len(names) - 1:
            h = g.tanh(h)
    return h


def prefixed(params: GeneratorParams, prefix: str) -> dict:
    return {prefix + k: v for k, v in params.arrays.items()}


def mmd2(X, Y, sigma: float) -> float:
    """Biased squared MMD with kernel ``exp(-|a-b|^2 / 2 sigma^2)``; never negative."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    if sigma <= 0:
        raise ValueError("bandwidth must be positive")
    gamma = -0.5 / sigma ** 2

    def kmean(A, B):
        d2 = np.sum(A * A, 1)[:, None] + np.sum(B * B, 1)[None, :] - 2.0 * A @ B.T
        return float(np.exp(gamma * np.maximum(d2, 0.0)).mean())

    return max(kmean(X, X) + kmean(Y, Y) - 2.0 * kmean(X, Y), 0.0)


def median_bandwidth(X, Y) -> float:
    Z = np.vstack([X, Y])
    d2 = np.sum(Z * Z, 1)[:, None] + np.sum(Z * Z, 1)[None, :] - 2.0 * Z @ Z.T
    iu = np.triu_indices(len(Z), k=1)
    med = float(np.median(np.sqrt(np.maximum(d2[iu], 0.0))))
    return med if med > 0 else 1.0


def _kernel_mean(g: Graph, A: Var, B: Var, gamma: Var) -> Var:
    ra = g.dot(A, A)
    rb = g.dot(B, B)
    cross = g.scale(A @ B.T, -2.0)
    d2 = g.transpose(cross + rb) + ra
    return g.mean(g.exp(g.mul(d2, gamma)))


def mmd2_graph(g: Graph, X: Var, Y: Var, gamma: Var) -> Var:
    """Biased MMD^2 in the graph; ``gamma`` is the scalar ``-1/(2 sigma^2)``."""
    xx = _kernel_mean(g, X, X, gamma)
    yy = _kernel_mean(g, Y, Y, gamma)
    xy = _kernel_mean(g, X, Y, gamma)
    return xx + yy - g.scale(xy, 2.0)


@dataclass
class PretrainConfig:
    iters: int = 3000
    batch: int = 64
    lr: float = LR
    betas: tuple = BETAS
    seed: int = 0
    bandwidth_every: int = 100


def pretrain_source(world: World, domain: str, config: PretrainConfig,
                    init: GeneratorParams | None = None) -> tuple[GeneratorParams, float]:
    """Fit a generator to ``domain``; returns parameters and a held-out final MMD^2."""
    params = init if init is not None else init_generator(config.seed, world.P)
    rng = make_rng(config.seed, "pretrain")
    B = config.batch
    g = Graph()
    W = g.const("w", (B, params.Dw))
    Y = g.const("y", (B, world.P))
    gamma = g.const("gamma", ())
    X = generator_graph(g, params, W, "g.", trainable=True)
    mmd2_graph(g, X, Y, gamma)

    arrays = prefixed(params, "g.")
    opt = Adam(config.lr, config.betas)
    sigma = 1.0
    for it in range(config.iters):
        w = rng.standard_normal((B, params.Dw))
        y = sample_domain(world, domain, B, rng)
        if it % config.bandwidth_every == 0:
            cur = GeneratorParams({k[2:]: v for k, v in arrays.items()})
            sigma = median_bandwidth(generate(cur, w), y)
        try:
            trace = g.forward({**arrays, "w": w, "y": y, "gamma": -0.5 / sigma ** 2})
        except NumericError as exc:
            raise NumericError(f"pretraining diverged at iteration {it}: {exc}") from exc
        grads = trace.backward()
        arrays = opt.step(arrays, {k: grads[k] for k in arrays})
    params = GeneratorParams({k[2:]: v for k, v in arrays.items()})

    eval_rng = make_rng(config.seed, "pretrain-eval")
    fake = generate(params, eval_rng.standard_normal((256, params.Dw)))
    real = sample_domain(world, domain, 256, eval_rng)
    final = mmd2(fake, real, median_bandwidth(fake, real))
    log.info("pretrain %s: %d iters, final mmd2 %.5f", domain, config.iters, final)
    return params, final

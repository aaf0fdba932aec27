"""Stage 2: adapt a copy of the source generator toward the target text.

Losses (each built on the autodiff graph, so one backward pass yields the
gradient of any weighted combination):

* directional: mean cosine distance between every image direction and the
  single text direction;
* directional moment: cosine distance between the mean image and mean text
  directions plus ``lambda_cov`` times the Frobenius distance of their Grams;
* EWC: Fisher-weighted squared displacement from the source parameters;
* relation consistency: row-wise KL between softmaxed inter-sample
  similarity matrices of source and target features.
"""

from __future__ import annotations

import contextlib
import logging
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Graph, NumericError, Var, guards_expected
from .generator import GeneratorParams, generate, generator_graph, prefixed
from .metrics import (FeatureSet, MetricsReport, UndefinedMetricError, frechet_distance,
                      intra_cluster_diversity, precision_recall, sse_compactness)
from .optim import Adam, BETAS, LR
from .rng import make_rng
from .variations import DegenerateError, VariationSet
from .world import World, encode_image, encode_text, encoder_bindings, encoder_graph, sample_domain

log = logging.getLogger(__name__)

ZERO_ROW = 1e-12
LOSS_MODES = ("dir-baseline", "dm-only", "dm+ewc", "full")
MODE_ALIASES = {"dir": "dir-baseline", "dm": "dm-only", "dm-ewc": "dm+ewc", "full": "full"}


def canonical_mode(mode: str) -> str:
    mode = MODE_ALIASES.get(mode, mode)
    if mode not in LOSS_MODES:
        raise ValueError(f"unknown loss mode {mode!r}; expected one of {LOSS_MODES}")
    return mode


@dataclass(frozen=True)
class DirectionSet:
    rows: np.ndarray
    kind: str

    def __post_init__(self):
        rows = np.atleast_2d(np.asarray(self.rows, dtype=np.float64))
        if rows.shape[0] < 1:
            raise ValueError("a direction set needs at least one row")
        norms = np.linalg.norm(rows, axis=1)
        if np.any(norms <= ZERO_ROW):
            bad = np.flatnonzero(norms <= ZERO_ROW).tolist()
            raise DegenerateError(f"{self.kind} direction set has zero rows {bad}")
        object.__setattr__(self, "rows", rows)


@dataclass(frozen=True)
class FisherDiag:
    arrays: dict
    samples: int

    def __post_init__(self):
        for k, a in self.arrays.items():
            if np.any(a < 0):
                raise ValueError(f"Fisher block {k!r} has negative entries")

    def flat(self) -> np.ndarray:
        return np.concatenate([self.arrays[k].ravel() for k in sorted(self.arrays)])


@dataclass
class AdaptConfig:
    N: int = 4
    iters: int = 2000
    lr: float = LR
    betas: tuple = BETAS
    lambda_cov: float = 1e3
    lambda_ewc: float = 1e7
    lambda_rel: float = 1e2
    fisher_samples: int = 256
    eval_every: int = 100
    loss_mode: str = "full"
    gram_normalize: bool = True
    seed: int = 0
    eval_samples: int = 256
    eval_k: int = 10
    pr_k: int = 3

    def __post_init__(self):
        self.loss_mode = canonical_mode(self.loss_mode)
        for name in ("lambda_cov", "lambda_ewc", "lambda_rel"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.N < 1 or (self.loss_mode == "full" and self.N < 2):
            raise ValueError("relation consistency needs a batch of at least 2")


# loss graphs ------------------------------------------------------------

def dir_graph(g: Graph, dI: Var, dT: Var) -> Var:
    return 1.0 - g.mean(g.cosine(dI, dT))


def gram(g: Graph, X: Var, normalize: bool) -> Var:
    G = X.T @ X
    return g.scale(G, 1.0 / X.shape[0]) if normalize else G


def dm_graph(g: Graph, dI: Var, dT: Var, lambda_cov: float, normalize: bool) -> tuple[Var, Var, Var]:
    """Returns (d1, d2, d1 + lambda_cov * d2)."""
    d1 = 1.0 - g.cosine(g.mean(dI, axis=0), g.mean(dT, axis=0))
    d2 = g.frobenius(gram(g, dI, normalize) - gram(g, dT, normalize))
    return d1, d2, d1 + g.scale(d2, lambda_cov)


def ewc_graph(g: Graph, keys, trg: str = "trg.", src: str = "src.", fisher: str = "F.") -> Var:
    total = None
    for k in keys:
        d = g.var(trg + k) - g.var(src + k)
        term = g.sum(g.mul(g.var(fisher + k), g.mul(d, d)))
        total = term if total is None else total + term
    return total


def rel_graph(g: Graph, xs: Var, xt: Var) -> Var:
    P = g.softmax_rows(xs @ xs.T)
    Q = g.softmax_rows(xt @ xt.T)
    kl = g.sum(g.mul(P, g.log(P) - g.log(Q)))
    return g.scale(kl, 1.0 / xs.shape[0])


def _eval(build, **arrays) -> float:
    g = Graph()
    vars_ = {k: g.const(k, np.shape(v)) for k, v in arrays.items()}
    out = build(g, **vars_)
    return float(g.forward(arrays).values[out.id])


# public scalar losses ------------------------------------------------------

def directional_loss(dI, dT) -> float:
    dI = np.atleast_2d(np.asarray(dI, dtype=np.float64))
    dT = np.asarray(dT, dtype=np.float64)
    if np.linalg.norm(dT) <= ZERO_ROW:
        raise DegenerateError("text direction is zero: source and target texts coincide")
    return _eval(lambda g, dI, dT: dir_graph(g, dI, dT), dI=dI, dT=dT)


def loss_dm(dI, dT, lambda_cov: float = 1e3, gram_normalize: bool = True) -> float:
    dI = np.atleast_2d(np.asarray(dI, dtype=np.float64))
    dT = np.atleast_2d(np.asarray(dT, dtype=np.float64))
    if np.linalg.norm(dT.mean(axis=0)) <= ZERO_ROW:
        log.warning("mean text direction is zero; the mean term falls back to the cosine guard")
    return _eval(lambda g, dI, dT: dm_graph(g, dI, dT, lambda_cov, gram_normalize)[2], dI=dI, dT=dT)


def loss_ewc(theta_trg: GeneratorParams, theta_src: GeneratorParams, fisher: FisherDiag) -> float:
    keys = list(theta_src.arrays)
    for k in keys:
        shapes = {theta_trg.arrays[k].shape, theta_src.arrays[k].shape, fisher.arrays[k].shape}
        if len(shapes) != 1:
            raise ValueError(f"parameter block {k!r} has mismatched shapes {shapes}")
    arrays = {**prefixed(theta_trg, "trg."), **prefixed(theta_src, "src."),
              **{"F." + k: v for k, v in fisher.arrays.items()}}
    return _eval(lambda g, **_: ewc_graph(g, keys), **arrays)


def loss_rel(x_src, x_trg) -> float:
    x_src = np.atleast_2d(np.asarray(x_src, dtype=np.float64))
    x_trg = np.atleast_2d(np.asarray(x_trg, dtype=np.float64))
    if x_src.shape[0] < 2 or x_src.shape != x_trg.shape:
        raise ValueError("relation consistency needs two equal-shape sets of at least 2 rows")
    return _eval(lambda g, xs, xt: rel_graph(g, xs, xt), xs=x_src, xt=x_trg)


# directions -------------------------------------------------------------

def build_text_directions(t_src, t_trg, variations: VariationSet | None = None) -> DirectionSet:
    t_src = np.asarray(t_src, dtype=np.float64)
    t_trg = np.asarray(t_trg, dtype=np.float64)
    rows = [t_trg - t_src]
    if variations is not None and variations.K > 0:
        if not np.array_equal(variations.target, t_trg):
            raise ValueError("variations were learned for a different target embedding")
        rows.extend(v - t_src for v in variations.V)
    return DirectionSet(np.vstack(rows), "text")


def image_directions(world: World, G_src: GeneratorParams, G_trg: GeneratorParams, W) -> np.ndarray:
    """Raw ``E_I(G_trg(w)) - E_I(G_src(w))`` rows (may be zero)."""
    return encode_image(world, generate(G_trg, W)) - encode_image(world, generate(G_src, W))


def build_image_directions(world, G_src, G_trg, W) -> DirectionSet:
    return DirectionSet(image_directions(world, G_src, G_trg, W), "image")


# Fisher ---------------------------------------------------------------

def estimate_fisher(world: World, G_src: GeneratorParams, t_src, M: int = 256,
                    seed: int = 0) -> FisherDiag:
    """Empirical diagonal Fisher: mean squared gradient of cos(E_I(G(w)), t_src) over M latents."""
    if M < 1:
        raise ValueError("M must be >= 1")
    t_src = np.asarray(t_src, dtype=np.float64)
    g = Graph()
    w = g.const("w", (1, G_src.Dw))
    t = g.const("t", t_src.shape)
    x = encoder_graph(g, world, generator_graph(g, G_src, w, "g.", trainable=True))
    g.sum(g.cosine(x, t))
    base = {**prefixed(G_src, "g."), **encoder_bindings(world), "t": t_src}
    rng = make_rng(seed, "fisher")
    acc = {k: np.zeros_like(v) for k, v in G_src.arrays.items()}
    for m in range(M):
        latent = rng.standard_normal((1, G_src.Dw))
        try:
            grads = g.forward({**base, "w": latent}).backward()
        except NumericError as exc:
            raise NumericError(f"Fisher sample {m}: {exc}") from exc
        for k in acc:
            acc[k] += grads["g." + k] ** 2
    return FisherDiag({k: v / M for k, v in acc.items()}, M)


# training -------------------------------------------------------------

@dataclass
class Stage2Graph:
    graph: Graph
    total: Var
    terms: dict = field(default_factory=dict)
    image_dirs: Var | None = None


def stage2_graph(world: World, G_src: GeneratorParams, n_text: int, config: AdaptConfig,
                 with_fisher: bool) -> Stage2Graph:
    g = Graph()
    W = g.const("w", (config.N, G_src.Dw))
    xs = encoder_graph(g, world, generator_graph(g, G_src, W, "src.", trainable=False))
    xt = encoder_graph(g, world, generator_graph(g, G_src, W, "trg.", trainable=True))
    dI = xt - xs
    dT = g.const("text_dir", (world.D,))
    terms = {"dir": dir_graph(g, dI, dT)}
    if n_text:
        text_set = g.const("text_set", (n_text, world.D))
        terms["dm"] = dm_graph(g, dI, text_set, config.lambda_cov, config.gram_normalize)[2]
    if with_fisher:
        for k, a in G_src.arrays.items():
            g.const("F." + k, a.shape)
        terms["ewc"] = ewc_graph(g, list(G_src.arrays))
    if config.N >= 2:
        terms["rel"] = rel_graph(g, xs, xt)

    mode = config.loss_mode
    if mode == "dir-baseline":
        total = terms["dir"]
    else:
        total = terms["dm"]
        if mode in ("dm+ewc", "full"):
            total = total + g.scale(terms["ewc"], config.lambda_ewc)
        if mode == "full":
            total = total + g.scale(terms["rel"], config.lambda_rel)
    return Stage2Graph(g, total, terms, dI)


@dataclass
class EvalContext:
    latents: np.ndarray
    real: FeatureSet
    k: int
    pr_k: int
    seed: int


def eval_context(world: World, trg_name: str, config: AdaptConfig, Dw: int) -> EvalContext:
    rng = make_rng(config.seed, "heldout")
    latents = rng.standard_normal((config.eval_samples, Dw))
    real = encode_image(world, sample_domain(world, trg_name, config.eval_samples, rng))
    return EvalContext(latents, FeatureSet(real, trg_name), config.eval_k, config.pr_k, config.seed)


def evaluate(world: World, params: GeneratorParams, ctx: EvalContext) -> dict:
    feats = FeatureSet(encode_image(world, generate(params, ctx.latents)), "generated")
    out = {"sse": sse_compactness(feats)}
    try:
        out["diversity_avg"], out["diversity_all"] = intra_cluster_diversity(feats, ctx.k, ctx.seed)
    except UndefinedMetricError:
        pass
    out["frechet"] = frechet_distance(feats, ctx.real)
    out["precision"], out["recall"] = precision_recall(ctx.real, feats, ctx.pr_k)
    return out


def adapt(world: World, G_src: GeneratorParams, variations: VariationSet | None,
          src_name: str, trg_name: str, config: AdaptConfig,
          fisher: FisherDiag | None = None) -> tuple[GeneratorParams, list[MetricsReport]]:
    """Train ``G_trg`` (initialized to ``G_src``) under the configured loss mode.

    Returns the adapted parameters and one report per iteration ``0..iters``;
    losses are those at the parameters *before* that iteration's update, and
    metrics are filled every ``eval_every`` iterations and at the end.
    """
    mode = config.loss_mode
    t_src, t_trg = encode_text(world, src_name), encode_text(world, trg_name)
    text = build_text_directions(t_src, t_trg, None if mode == "dir-baseline" else variations)
    needs_fisher = mode in ("dm+ewc", "full")
    if needs_fisher and fisher is None:
        fisher = estimate_fisher(world, G_src, t_src, config.fisher_samples, config.seed)

    s2 = stage2_graph(world, G_src, 0 if mode == "dir-baseline" else text.rows.shape[0],
                      config, fisher is not None)
    fixed = {**prefixed(G_src, "src."), **encoder_bindings(world), "text_dir": text.rows[0]}
    if "dm" in s2.terms:
        fixed["text_set"] = text.rows
    if fisher is not None:
        fixed.update({"F." + k: v for k, v in fisher.arrays.items()})

    trg = prefixed(G_src, "trg.")
    keys = list(trg)
    opt = Adam(config.lr, config.betas)
    rng = make_rng(config.seed, "adapt-batch")
    ctx = eval_context(world, trg_name, config, G_src.Dw)
    reports = []
    for it in range(config.iters + 1):
        w = rng.standard_normal((config.N, G_src.Dw))
        # G_trg == G_src at the start, so every image direction is zero there
        quiet = guards_expected() if it == 0 else contextlib.nullcontext()
        try:
            with quiet:
                trace = s2.graph.forward({**fixed, **trg, "w": w})
        except NumericError as exc:
            raise NumericError(f"adaptation diverged at iteration {it}: {exc}") from exc
        rep = MetricsReport(it, loss_total=float(trace[s2.total]))
        for name, var in s2.terms.items():
            setattr(rep, "loss_" + name, float(trace[var]))
        if it % config.eval_every == 0 or it == config.iters:
            current = GeneratorParams({k[4:]: v for k, v in trg.items()})
            for name, value in evaluate(world, current, ctx).items():
                setattr(rep, name, value)
        reports.append(rep)
        if not np.isfinite(rep.loss_total):
            raise NumericError(f"non-finite loss at iteration {it}: {rep}")
        if it == config.iters:
            break
        try:
            with quiet:
                grads = trace.backward(s2.total)
        except NumericError as exc:
            raise NumericError(f"adaptation diverged at iteration {it}: {exc}; losses {rep}") from exc
        grads = {k: grads[k] for k in keys}
        if np.all(np.linalg.norm(trace[s2.image_dirs], axis=1) <= ZERO_ROW):
            grads = _rescale_degenerate(grads)
        trg = opt.step(trg, grads)
    return GeneratorParams({k[4:]: v for k, v in trg.items()}), reports


def _rescale_degenerate(grads: dict) -> dict:
    """Rescale a gradient taken where every image direction is zero to unit RMS.

    There the cosine terms are only defined through the norm floor, so the
    gradient direction is meaningful but its magnitude scales like 1/floor;
    left as is it would dominate Adam's second-moment estimate for thousands
    of steps.
    """
    flat = np.concatenate([g.ravel() for g in grads.values()])
    rms = float(np.sqrt(np.mean(flat ** 2)))
    if rms == 0.0:
        return grads
    log.info("degenerate image directions: rescaling gradient (rms %.3g) to unit rms", rms)
    return {k: g / rms for k, g in grads.items()}

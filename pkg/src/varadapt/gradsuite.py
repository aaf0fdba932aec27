"""Finite-difference check of every training loss at random small configurations.

Each case builds a fresh graph with randomly drawn shapes and inputs and
compares backward gradients against central differences at every leaf
coordinate (see ``autodiff.grad_check``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .adaptation import AdaptConfig, dir_graph, dm_graph, ewc_graph, rel_graph, stage2_graph
from .autodiff import Graph, grad_check
from .generator import init_generator, prefixed
from .rng import make_rng
from .variations import cons_graph, div_graph, perturb_graph, stage1_graph
from .world import build_world, default_domains, encoder_bindings

LOSSES = ("dir", "cons", "div", "dm", "ewc", "rel", "stage1", "stage2")


@dataclass
class CaseResult:
    loss: str
    case: int
    max_rel_error: float
    worst: str


def _dir(rng):
    N, D = rng.integers(1, 5), rng.integers(2, 7)
    g = Graph()
    dir_graph(g, g.leaf("dI", (N, D)), g.leaf("dT", (D,)))
    return g, {"dI": rng.normal(size=(N, D)), "dT": rng.normal(size=D)}


def _cons(rng):
    K, D = rng.integers(1, 5), rng.integers(2, 7)
    g = Graph()
    t = g.const("t", (D,))
    cons_graph(g, t, perturb_graph(g, t, g.leaf("Z", (K, D)), float(rng.uniform(0.5, 2.0))))
    return g, {"t": rng.normal(size=D), "Z": rng.normal(size=(K, D))}


def _div(rng):
    K, D = rng.integers(2, 6), rng.integers(2, 7)
    g = Graph()
    div_graph(g, g.leaf("Z", (K, D)))
    return g, {"Z": rng.normal(size=(K, D))}


def _dm(rng):
    N, R, D = rng.integers(1, 6), rng.integers(1, 8), rng.integers(2, 7)
    g = Graph()
    dm_graph(g, g.leaf("dI", (N, D)), g.leaf("dT", (R, D)), 1e3, bool(rng.integers(2)))
    return g, {"dI": rng.normal(size=(N, D)), "dT": rng.normal(size=(R, D)) + 1.0}


def _ewc(rng):
    shapes = {f"b{i}": tuple(rng.integers(1, 4, size=rng.integers(1, 3))) for i in range(3)}
    g = Graph()
    point = {}
    for k, s in shapes.items():
        g.leaf("trg." + k, s)
        g.const("src." + k, s)
        g.const("F." + k, s)
        point["src." + k] = rng.normal(size=s)
        point["trg." + k] = point["src." + k] + rng.normal(scale=0.1, size=s)
        point["F." + k] = rng.uniform(0.0, 1.0, size=s)
    ewc_graph(g, list(shapes))
    return g, point


def _rel(rng):
    N, D = rng.integers(2, 6), rng.integers(2, 7)
    g = Graph()
    rel_graph(g, g.leaf("xs", (N, D)), g.leaf("xt", (N, D)))
    return g, {"xs": rng.normal(size=(N, D)), "xt": rng.normal(size=(N, D))}


def _stage1(rng):
    K = rng.integers(2, 6)
    D = rng.integers(K, 9)
    t = rng.normal(size=D)
    g = stage1_graph(t, int(K), float(np.linalg.norm(t)), 1.0)[0]
    return g, {"target": t, "Z": rng.normal(size=(K, D))}


def _stage2(rng):
    P, D, h = rng.integers(2, 5), rng.integers(2, 6), rng.integers(3, 7)
    seed = int(rng.integers(2**31))
    world = build_world(seed, int(P), int(D), int(h), default_domains(seed, int(P)))
    G = init_generator(seed, int(P), Dw=3, hidden=(4, 4))
    N, R = int(rng.integers(2, 5)), int(rng.integers(2, 6))
    cfg = AdaptConfig(N=N, loss_mode="full")
    s2 = stage2_graph(world, G, R, cfg, with_fisher=True)
    point = {**prefixed(G, "src."), **encoder_bindings(world)}
    for k, a in G.arrays.items():
        point["trg." + k] = a + rng.normal(scale=0.05, size=a.shape)
        point["F." + k] = rng.uniform(0.0, 1e-4, size=a.shape)
    point["w"] = rng.normal(size=(N, 3))
    point["text_dir"] = rng.normal(size=D)
    point["text_set"] = rng.normal(size=(R, D)) + point["text_dir"]
    return s2.graph, point, s2.total


_BUILDERS = {"dir": _dir, "cons": _cons, "div": _div, "dm": _dm, "ewc": _ewc, "rel": _rel,
             "stage1": _stage1, "stage2": _stage2}


def run_suite(cases: int = 20, seed: int = 0, losses=LOSSES, h: float = 1e-5,
              tol: float = 1e-4) -> list[CaseResult]:
    results = []
    for name in losses:
        for i in range(cases):
            built = _BUILDERS[name](make_rng(seed, "gradsuite", name, str(i)))
            graph, point = built[0], built[1]
            output = built[2] if len(built) > 2 else None
            rep = grad_check(graph, point, h=h, tol=tol, output=output)
            results.append(CaseResult(name, i, rep.max_rel_error, rep.worst))
    return results

"""Exit criteria. Each test prints one PASS/FAIL line with the measured numbers.

The training experiments share one session fixture: for every seed a source
generator, a stage-1 variation set and a Fisher estimate, plus a stage-2 run
of each loss mode.
"""

import itertools
import os
import time

import numpy as np
import pytest

from varadapt.adaptation import (LOSS_MODES, AdaptConfig, adapt, build_text_directions,
                                 dm_graph, estimate_fisher, eval_context, evaluate, loss_rel)
from varadapt.autodiff import Graph
from varadapt.cli import main
from varadapt.generator import PretrainConfig, pretrain_source
from varadapt.gradsuite import LOSSES, run_suite
from varadapt.metrics import frechet_distance, kmedoids, precision_recall
from varadapt.optim import Adam
from varadapt.rng import make_rng
from varadapt.variations import Stage1Config, learn_variations, loss_div
from varadapt.world import default_world, encode_text

pytestmark = [pytest.mark.acceptance, pytest.mark.slow]

SEEDS = range(5)


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {n} {'PASS' if ok else 'FAIL'}: {detail}", flush=True)
    return emit


@pytest.fixture(scope="session")
def runs():
    """seed -> dict(G, vs, fisher, final generators and reports per loss mode)."""
    world = default_world()
    t_src, t_trg = encode_text(world, "src"), encode_text(world, "trg")
    out = {}
    for s in SEEDS:
        G, _ = pretrain_source(world, "src", PretrainConfig(seed=s))
        vs = learn_variations(t_trg, 6, config=Stage1Config(seed=s))
        fisher = estimate_fisher(world, G, t_src, 256, s)
        arms = {}
        for mode in LOSS_MODES:
            arms[mode] = adapt(world, G, vs, "src", "trg", AdaptConfig(loss_mode=mode, seed=s),
                               fisher=fisher)
        out[s] = {"G": G, "vs": vs, "fisher": fisher, "arms": arms}
    return world, out


def test_1_gradient_suite(report):
    t0 = time.perf_counter()
    results = run_suite(cases=20, seed=0, h=1e-5)
    elapsed = time.perf_counter() - t0
    worst = {loss: max(r.max_rel_error for r in results if r.loss == loss) for loss in LOSSES}
    ok = max(worst.values()) < 1e-4 and elapsed < 60
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    report(1, ok, f"max rel error per loss [{detail}]; {elapsed:.1f} s")
    assert ok


def test_2_stage1_geometry(report):
    t = encode_text(default_world(), "trg")
    eps = float(np.linalg.norm(t))
    t0 = time.perf_counter()
    rows, ok = [], True
    for s in SEEDS:
        vs = learn_variations(t, 6, eps, Stage1Config(seed=s))
        V = vs.V
        div = loss_div(vs.Z)
        cos_min = min(float(v @ t / (np.linalg.norm(v) * np.linalg.norm(t))) for v in V)
        radius = float(np.max(np.abs(np.linalg.norm(V - t, axis=1) - eps)))
        ok &= div < 0.05 and cos_min >= 0.697 and radius <= 1e-9
        rows.append(f"seed {s}: div {div:.2e} min cos {cos_min:.4f} radius err {radius:.1e}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 30
    report(2, ok, "; ".join(rows) + f"; {elapsed:.1f} s")
    assert ok


def _free_vector_run(T, seed, lambda_cov=1.0, lr=0.002, betas=(0.9, 0.99), steps=5000):
    g = Graph()
    X = g.leaf("X", T.shape)
    total = dm_graph(g, X, g.const("T", T.shape), lambda_cov, True)[2]
    x = 0.01 * make_rng(seed, "free").standard_normal(T.shape)
    opt = Adam(lr, betas)
    for step in range(steps + 1):
        tr = g.forward({"X": x, "T": T})
        loss = float(tr[total])
        if loss < 1e-3 or step == steps:
            break
        x = opt.step({"X": x}, {"X": tr.backward(total)["X"]})["X"]

    def eig(A):
        return np.sort(np.linalg.eigvalsh(A.T @ A / len(A)))

    return step, loss, float(np.max(np.abs(eig(x) - eig(T))))


def test_3_moment_matching(report):
    world = default_world()
    t_src, t_trg = encode_text(world, "src"), encode_text(world, "trg")
    rows, ok = [], True
    for s in SEEDS:
        T = build_text_directions(t_src, t_trg, learn_variations(t_trg, 6, config=Stage1Config(seed=s))).rows
        assert T.shape == (7, 16)
        step, loss, gap = _free_vector_run(T, s)
        ok &= loss < 1e-3 and gap < 1e-2
        rows.append(f"seed {s}: {step} steps loss {loss:.1e} eig gap {gap:.1e}")
    report(3, ok, "; ".join(rows))
    assert ok


def _diversity_1000(world, G, seed):
    ctx = eval_context(world, "trg", AdaptConfig(seed=seed, eval_samples=1000), G.Dw)
    return evaluate(world, G, ctx)["diversity_avg"]


def test_4_ablation_ordering(report, runs):
    world, per_seed = runs
    t0 = time.perf_counter()
    div = {m: [_diversity_1000(world, per_seed[s]["arms"][m][0], s) for s in SEEDS]
           for m in LOSS_MODES}
    med = [float(np.median(div[m])) for m in LOSS_MODES]
    monotone = all(a <= b for a, b in zip(med, med[1:]))
    ratio = med[-1] / med[0]
    ok = monotone and ratio >= 1.2
    detail = ", ".join(f"{m} {v:.3f}" for m, v in zip(LOSS_MODES, med))
    report(4, ok, f"median diversity [{detail}]; full/dir {ratio:.3f}; monotone {monotone}; "
                  f"eval {time.perf_counter() - t0:.0f} s")
    assert ok


def test_5_sse_shape(report, runs):
    _, per_seed = runs
    wins, rows = 0, []
    for s in SEEDS:
        curves = {}
        for m in ("dir-baseline", "dm-only"):
            reps = [r for r in per_seed[s]["arms"][m][1] if r.has_metrics]
            assert [r.iter for r in reps] == list(range(0, 2001, 100))
            curves[m] = reps[-1].sse
        wins += curves["dm-only"] > curves["dir-baseline"]
        rows.append(f"seed {s}: dir {curves['dir-baseline']:.1f} dm {curves['dm-only']:.1f}")
    ok = wins >= 4
    report(5, ok, f"dm-only > dir-baseline in {wins}/5 seeds; " + "; ".join(rows))
    assert ok


def test_6_metric_oracles(report):
    rng = np.random.default_rng(6)
    worst_cost = 0.0
    for _ in range(40):
        S = int(rng.integers(2, 9))
        k = int(rng.integers(1, S + 1))
        X = rng.normal(size=(S, 2))
        D = np.linalg.norm(X[:, None] - X[None], axis=-1)
        brute = min(D[list(m)].min(axis=0).sum() for m in itertools.combinations(range(S), k))
        worst_cost = max(worst_cost, abs(kmedoids(X, k).cost - brute))
    x, y = rng.normal(size=300), 3.0 * rng.normal(size=200) + 1.0
    closed = (x.mean() - y.mean()) ** 2 + (x.std(ddof=1) - y.std(ddof=1)) ** 2
    fd_err = abs(frechet_distance(x[:, None], y[:, None]) - closed)
    A = rng.normal(size=(100, 6))
    fd_self = frechet_distance(A, A)
    rel = loss_rel(A[:8], A[:8])
    pr = precision_recall(A, A, 3)
    ok = worst_cost < 1e-12 and fd_err < 1e-8 and fd_self < 1e-8 and rel == 0.0 and pr == (1.0, 1.0)
    report(6, ok, f"kmedoids vs brute force {worst_cost:.1e}; frechet 1-D err {fd_err:.1e}; "
                  f"self {fd_self:.1e}; loss_rel(x, x) {rel}; PR(self) {pr}")
    assert ok


def test_7_ewc_containment(report, runs):
    world, per_seed = runs
    rows, ok = [], True
    for s in SEEDS:
        d = per_seed[s]
        F = d["fisher"].flat()
        mask = F > np.median(F)
        G_ewc, _ = adapt(world, d["G"], d["vs"], "src", "trg",
                         AdaptConfig(loss_mode="dm+ewc", lambda_ewc=1e12, seed=s, eval_every=10**9),
                         fisher=d["fisher"])
        held = float(np.max(np.abs(G_ewc.flat() - d["G"].flat())[mask]))
        free = float(np.max(np.abs(d["arms"]["dir-baseline"][0].flat() - d["G"].flat())[mask]))
        ok &= held < 1e-3 and free > 1e-2
        rows.append(f"seed {s}: ewc {held:.4e} dir {free:.3f}")
    report(7, ok, "max |displacement| on above-median-Fisher parameters; " + "; ".join(rows))
    assert ok


def test_8_reproducibility(report, tmp_path):
    a, b = str(tmp_path / "a"), str(tmp_path / "b")
    t0 = time.perf_counter()
    assert main(["full-run", "--out", a]) == 0
    assert main(["full-run", "--out", b, "--jobs", "2"]) == 0
    files = sorted(n for n in os.listdir(a) if n.endswith((".json", ".csv")))
    same = sorted(os.listdir(a)) == sorted(os.listdir(b)) and all(
        open(os.path.join(a, n), "rb").read() == open(os.path.join(b, n), "rb").read()
        for n in files)
    report(8, same, f"{len(files)} checkpoints and CSVs byte-identical across two full runs: {same}; "
                    f"{time.perf_counter() - t0:.0f} s")
    assert same

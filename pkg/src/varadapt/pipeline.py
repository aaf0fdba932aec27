"""Experiment orchestration on top of the library: one function per CLI stage.

Every stage reads its inputs from and writes its outputs to a run directory.
Outputs are write-once: an existing file is never overwritten unless
``force`` is set.
"""

from __future__ import annotations

import csv
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .adaptation import (FisherDiag, adapt, canonical_mode, estimate_fisher, eval_context,
                         evaluate)
from .generator import GeneratorParams, generate, pretrain_source
from .io import (CheckpointError, RunConfig, dump_config, load_checkpoint, read_metrics_csv,
                 render_svg_chart, save_checkpoint, write_metrics_csv)
from .metrics import MetricsReport, diversity_pair_std
from .variations import VariationSet, learn_variations
from .world import World, encode_image, encode_text

log = logging.getLogger(__name__)

# short names used in file names and on the command line
SHORT = {"dir-baseline": "dir", "dm-only": "dm", "dm+ewc": "dm-ewc", "full": "full"}
ABLATION = ("dir-baseline", "dm-only", "dm+ewc", "full")


class OutputExists(FileExistsError):
    pass


@dataclass
class Run:
    """A run directory bound to a config."""

    cfg: RunConfig
    out: str
    force: bool = False

    def path(self, name: str) -> str:
        return os.path.join(self.out, name)

    def claim(self, name: str) -> str:
        p = self.path(name)
        if os.path.exists(p) and not self.force:
            raise OutputExists(f"{p} already exists; outputs are write-once (use --force)")
        os.makedirs(self.out, exist_ok=True)
        return p

    def meta(self, **extra) -> dict:
        return {"config_hash": self.cfg.hash(), "run_seed": self.cfg.seed, **extra}

    def load(self, name: str, kind: str, hint: str):
        p = self.path(name)
        if not os.path.exists(p):
            raise CheckpointError(f"{p} not found; run `varadapt {hint}` first")
        return load_checkpoint(p, kind, self.cfg.hash())[0]


def write_config(run: Run) -> None:
    p = run.path("config.ini")
    text = dump_config(run.cfg)
    if os.path.exists(p):
        with open(p, encoding="utf-8") as fh:
            if fh.read() == text:
                return
        if not run.force:
            raise OutputExists(f"{p} holds a different config; use a fresh --out or --force")
    os.makedirs(run.out, exist_ok=True)
    with open(p, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


# stages -------------------------------------------------------------------

def stage_world(run: Run) -> World:
    world = run.cfg.world.build()
    save_checkpoint(world, run.claim("world.json"), run.meta())
    return world


def stage_pretrain(run: Run, world: World) -> GeneratorParams:
    G, mmd = pretrain_source(world, run.cfg.source, run.cfg.pretrain)
    log.info("pretrained source generator: held-out MMD^2 %.4g", mmd)
    save_checkpoint(G, run.claim("generator_src.json"),
                    run.meta(iteration=run.cfg.pretrain.iters, mmd2=mmd))
    return G


def stage_variations(run: Run, world: World) -> VariationSet:
    vs = learn_variations(encode_text(world, run.cfg.target), run.cfg.K, run.cfg.eps,
                          run.cfg.stage1)
    save_checkpoint(vs, run.claim("variations.json"), run.meta(iteration=run.cfg.stage1.iters))
    with open(run.claim("stage1.csv"), "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iter", "loss_cons", "loss_div"])
        for it, cons, div in vs.history:
            w.writerow([int(it), format(float(cons), ".17g"), format(float(div), ".17g")])
    return vs


def stage_fisher(run: Run, world: World, G_src: GeneratorParams) -> FisherDiag:
    F = estimate_fisher(world, G_src, encode_text(world, run.cfg.source),
                        run.cfg.stage2.fisher_samples, run.cfg.seed)
    save_checkpoint(F, run.claim("fisher.json"), run.meta())
    return F


def _adapt_job(args):
    world, G_src, vs, src, trg, acfg, fisher = args
    return adapt(world, G_src, vs, src, trg, acfg, fisher)


def stage_adapt(run: Run, world: World, G_src: GeneratorParams, vs: VariationSet | None,
                fisher: FisherDiag | None, mode: str | None = None, result=None):
    mode = canonical_mode(mode or run.cfg.stage2.loss_mode)
    short = SHORT[mode]
    names = (f"generator_{short}.json", f"losses_{short}.csv", f"metrics_{short}.csv")
    paths = [run.claim(n) for n in names]
    acfg = run.cfg.adapt_config(loss_mode=mode)
    if result is None:
        result = _adapt_job((world, G_src, vs, run.cfg.source, run.cfg.target, acfg,
                             fisher if mode in ("dm+ewc", "full") else None))
    G_trg, reports = result
    save_checkpoint(G_trg, paths[0], run.meta(iteration=acfg.iters, loss_mode=mode))
    write_metrics_csv(reports, paths[1])
    write_metrics_csv([r for r in reports if r.has_metrics], paths[2])
    return G_trg, reports


def stage_ablation(run: Run, world: World, G_src: GeneratorParams, vs: VariationSet,
                   fisher: FisherDiag, jobs: int = 1) -> dict:
    """All four loss modes on shared seeds; returns mode -> final report."""
    jobs_args = [(world, G_src, vs, run.cfg.source, run.cfg.target,
                  run.cfg.adapt_config(loss_mode=m),
                  fisher if m in ("dm+ewc", "full") else None) for m in ABLATION]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(ABLATION))) as pool:
            results = list(pool.map(_adapt_job, jobs_args))
    else:
        results = [_adapt_job(a) for a in jobs_args]
    finals = {}
    for mode, res in zip(ABLATION, results):
        _, reports = stage_adapt(run, world, G_src, vs, fisher, mode, result=res)
        finals[mode] = reports[-1]
    with open(run.claim("ablation.csv"), "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        cols = ["sse", "diversity_avg", "diversity_all", "frechet", "precision", "recall"]
        w.writerow(["loss_mode", *cols])
        for mode, rep in finals.items():
            w.writerow([mode, *(_cell(getattr(rep, c)) for c in cols)])
    return finals


EVAL_COLUMNS = ("psi", "sse", "diversity_avg", "diversity_all", "diversity_all_std", "frechet",
                "precision", "recall")


def stage_eval(run: Run, world: World, G: GeneratorParams, label: str) -> list[dict]:
    acfg = run.cfg.adapt_config(eval_samples=run.cfg.eval.samples)
    ctx = eval_context(world, run.cfg.target, acfg, G.Dw)
    rows = []
    base = ctx.latents
    for psi in run.cfg.eval.truncation:
        ctx.latents = psi * base
        row = {"psi": psi, **evaluate(world, G, ctx)}
        if "diversity_all" in row:
            feats = encode_image(world, generate(G, ctx.latents))
            row["diversity_all_std"] = diversity_pair_std(feats, ctx.k, ctx.seed)
        rows.append(row)
    with open(run.claim(f"eval_{label}.csv"), "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EVAL_COLUMNS)
        for r in rows:
            w.writerow([_cell(r.get(c)) for c in EVAL_COLUMNS])
    return rows


def stage_report(run: Run, csv_paths=None) -> list[str]:
    """SVG charts from loss CSVs: SSE and total loss per loss mode, plus per-mode loss terms."""
    if csv_paths is None:
        csv_paths = [run.path(f"losses_{SHORT[m]}.csv") for m in ABLATION
                     if os.path.exists(run.path(f"losses_{SHORT[m]}.csv"))]
    if not csv_paths:
        raise FileNotFoundError(f"no losses_*.csv in {run.out}; run `varadapt adapt` first")
    logs = {_label(p): read_metrics_csv(p) for p in csv_paths}
    written = []

    def chart(name, series, **kw):
        series = {k: v for k, v in series.items() if len(v[0])}
        if series:
            p = run.claim(name)
            render_svg_chart(series, p, **kw)
            written.append(p)

    chart("sse.svg", {k: _xy(v, "sse") for k, v in logs.items()},
          title="SSE compactness of generated samples", ylabel="SSE")
    chart("diversity.svg", {k: _xy(v, "diversity_avg") for k, v in logs.items()},
          title="Intra-cluster diversity", ylabel="mean pairwise distance")
    for k, v in logs.items():
        terms = {t: _xy(v, "loss_" + t) for t in ("dir", "dm", "ewc", "rel", "total")}
        chart(f"losses_{k}.svg", terms, title=f"Training losses ({k})", ylabel="loss")
    return written


def _label(path: str) -> str:
    base = os.path.splitext(os.path.basename(path))[0]
    return base[len("losses_"):] if base.startswith("losses_") else base


def _xy(reports: list[MetricsReport], col: str):
    pts = [(r.iter, getattr(r, col)) for r in reports if getattr(r, col) is not None]
    return (np.array([p[0] for p in pts], dtype=float), np.array([p[1] for p in pts], dtype=float))


def _cell(v) -> str:
    return "" if v is None else format(float(v), ".17g")


def full_run(run: Run, jobs: int = 1) -> dict:
    write_config(run)
    world = stage_world(run)
    G_src = stage_pretrain(run, world)
    vs = stage_variations(run, world)
    fisher = stage_fisher(run, world, G_src)
    finals = stage_ablation(run, world, G_src, vs, fisher, jobs)
    stage_eval(run, world, G_src, "src")
    for mode in ABLATION:
        G = run.load(f"generator_{SHORT[mode]}.json", "generator", "ablation")
        stage_eval(run, world, G, SHORT[mode])
    stage_report(run)
    return finals

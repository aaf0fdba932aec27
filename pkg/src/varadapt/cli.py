"""Command line entry point: ``varadapt <command> [--config PATH] [--out DIR] ...``.

Exit status is 0 on success, 1 on usage or configuration errors and 2 when a
computation aborts on a numeric problem.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from . import pipeline
from .adaptation import MODE_ALIASES
from .autodiff import NumericError
from .io import ConfigError, RunConfig, load_config
from .pipeline import SHORT, Run
from .variations import DegenerateError

log = logging.getLogger("varadapt")

COMMANDS = ("world", "pretrain", "variations", "adapt", "eval", "gradcheck", "ablation",
            "report", "full-run")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="INI config file (defaults if omitted)")
    common.add_argument("--out", metavar="DIR", help="run directory (overrides run.out)")
    common.add_argument("--seed", type=int, metavar="U64", help="run seed (overrides run.seed)")
    common.add_argument("--loss-mode", choices=sorted(MODE_ALIASES), help="stage-2 loss mode")
    common.add_argument("--force", action="store_true", help="overwrite existing outputs")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="varadapt", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, metavar="command")
    helps = {
        "world": "build the synthetic world and save it",
        "pretrain": "fit the source generator",
        "variations": "learn the semantic variations (stage 1)",
        "adapt": "adapt the generator under one loss mode (stage 2)",
        "eval": "evaluate a generator over the truncation list",
        "gradcheck": "finite-difference check of every loss",
        "ablation": "run all four loss modes on shared seeds",
        "report": "render SVG charts from loss CSVs",
        "full-run": "world, pretrain, variations, ablation, eval and report",
    }
    cmds = {name: sub.add_parser(name, parents=[common], help=helps[name]) for name in COMMANDS}
    cmds["eval"].add_argument("--generator", choices=["src", *SHORT.values()],
                              help="which generator to evaluate (default: the loss mode's)")
    cmds["gradcheck"].add_argument("--cases", type=int, default=20)
    cmds["report"].add_argument("csv", nargs="*", help="loss CSVs (default: all in --out)")
    for name in ("ablation", "full-run"):
        cmds[name].add_argument("--jobs", type=int, default=1, help="run the arms in parallel")
    return p


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        if args.seed < 0 or args.seed >= 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        cfg = cfg.with_seed(args.seed)
    if args.out:
        cfg.out = args.out
    return cfg


def _world(run: Run):
    return run.load("world.json", "world", "world")


def _gsrc(run: Run):
    return run.load("generator_src.json", "generator", "pretrain")


def _fisher(run: Run, world, G):
    if os.path.exists(run.path("fisher.json")):
        return run.load("fisher.json", "fisher", "adapt")
    return pipeline.stage_fisher(run, world, G)


def dispatch(args) -> int:
    cfg = _config(args)
    run = Run(cfg, cfg.out, args.force)
    cmd = args.command
    if cmd == "gradcheck":
        from .gradsuite import LOSSES, run_suite
        results = run_suite(cases=args.cases, seed=cfg.seed)
        ok = True
        for loss in LOSSES:
            worst = max((r for r in results if r.loss == loss), key=lambda r: r.max_rel_error)
            status = "ok" if worst.max_rel_error < 1e-4 else "FAIL"
            ok &= status == "ok"
            print(f"{loss:8s} max rel error {worst.max_rel_error:.3e} "
                  f"(case {worst.case}, {worst.worst}) {status}")
        return 0 if ok else 2
    if cmd == "report":
        for p in pipeline.stage_report(run, args.csv or None):
            print(p)
        return 0
    if cmd == "full-run":
        finals = pipeline.full_run(run, args.jobs)
        _print_finals(finals)
        return 0

    pipeline.write_config(run)
    if cmd == "world":
        w = pipeline.stage_world(run)
        print(f"world: P={w.P} D={w.D} hidden={w.hidden} domains={w.domain_names}")
        return 0
    world = _world(run)
    if cmd == "pretrain":
        pipeline.stage_pretrain(run, world)
        return 0
    if cmd == "variations":
        vs = pipeline.stage_variations(run, world)
        print(f"learned {vs.K} variations, eps={vs.epsilon:.6g}")
        return 0
    G = _gsrc(run)
    # the loss mode picks which arm to run; it is not part of the stored config
    mode = MODE_ALIASES[args.loss_mode] if args.loss_mode else cfg.stage2.loss_mode
    needs_vs = mode != "dir-baseline" or cmd == "ablation"
    vs = run.load("variations.json", "variations", "variations") if needs_vs and cmd != "eval" else None
    if cmd == "adapt":
        fisher = _fisher(run, world, G) if mode in ("dm+ewc", "full") else None
        _, reports = pipeline.stage_adapt(run, world, G, vs, fisher, mode)
        _print_finals({mode: reports[-1]})
        return 0
    if cmd == "ablation":
        finals = pipeline.stage_ablation(run, world, G, vs, _fisher(run, world, G), args.jobs)
        _print_finals(finals)
        return 0
    if cmd == "eval":
        label = args.generator or SHORT[mode]
        target = G if label == "src" else run.load(f"generator_{label}.json", "generator", "adapt")
        for row in pipeline.stage_eval(run, world, target, label):
            print("  ".join(f"{k}={v:.6g}" for k, v in row.items()))
        return 0
    raise AssertionError(cmd)


def _print_finals(finals: dict) -> None:
    for mode, rep in finals.items():
        div = "n/a" if rep.diversity_avg is None else f"{rep.diversity_avg:.4f}"
        print(f"{mode:13s} sse={rep.sse:.6g} diversity={div} frechet={rep.frechet:.4g} "
              f"precision={rep.precision:.3f} recall={rep.recall:.3f}")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors; usage errors are 1 here
        return 0 if exc.code == 0 else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return dispatch(args)
    except (NumericError, FloatingPointError, DegenerateError, ArithmeticError) as exc:
        print(f"varadapt: numeric abort: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, ValueError, OSError) as exc:
        print(f"varadapt: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

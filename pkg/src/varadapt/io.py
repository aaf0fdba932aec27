"""Run configuration, checkpoints, metric CSVs and SVG charts.

Config files are INI documents (``configparser`` syntax, ``#`` comments).
Sections and keys, with defaults::

    [run]      seed = 0            out = runs/default
    [world]    seed = 7  P = 8  D = 16  hidden = 32
               domains = src, trg  separation = 4.0  scale = 0.7
    [domain.NAME]  mean = x1, x2, ...   scale = s or s1, s2, ...
    [pretrain] iters = 3000  batch = 64  lr = 0.002  betas = 0, 0.99  bandwidth_every = 100
    [stage1]   K = 6  iters = 2000  lr = 0.002  betas = 0, 0.99  lambda_div = 1  eps = auto
    [stage2]   source = src  target = trg  N = 4  iters = 2000  lr = 0.002  betas = 0, 0.99
               lambda_cov = 1000  lambda_ewc = 1e7  lambda_rel = 100  fisher_samples = 256
               eval_every = 100  heldout = 256  loss_mode = full  gram_normalize = true
    [eval]     k = 10  samples = 1000  pr_k = 3  truncation = 0.5, 0.7, 1.0

``stage2.heldout`` is the latent set scored every ``eval_every`` iterations
during adaptation; ``eval.samples`` is the sample count of the ``eval``
command. ``eval.k`` and ``eval.pr_k`` apply to both.

``[domain.NAME]`` sections are optional; when none are given the two names in
``world.domains`` get the default pair of clusters ``separation`` apart.

Checkpoints are JSON with every real written as a 17-significant-digit
decimal, which round-trips 64-bit floats exactly.
"""

from __future__ import annotations

import configparser
import csv
import hashlib
import json
import logging
import math
import os
from dataclasses import dataclass, field, fields

import numpy as np

from .adaptation import LOSS_MODES, AdaptConfig, FisherDiag, canonical_mode
from .generator import GeneratorParams, PretrainConfig
from .metrics import MetricsReport
from .variations import Stage1Config, VariationSet
from .world import ENCODER_KEYS, ConfigError, DomainSpec, World, build_world, default_domains

log = logging.getLogger(__name__)

__all__ = [
    "ConfigError", "CheckpointError", "RunConfig", "load_config", "parse_config", "dump_config",
    "configs_equal", "save_checkpoint", "load_checkpoint", "write_metrics_csv", "read_metrics_csv",
    "render_svg_chart",
]


class CheckpointError(ValueError):
    pass


# configuration ------------------------------------------------------------

@dataclass
class WorldConfig:
    seed: int = 7
    P: int = 8
    D: int = 16
    hidden: int = 32
    domains: tuple = ("src", "trg")
    separation: float = 4.0
    scale: float = 0.7
    custom: dict = field(default_factory=dict)  # name -> (mean, scale)

    def build(self) -> World:
        if self.custom:
            specs = [DomainSpec(n, *self.custom[n]) for n in self.domains]
        else:
            specs = default_domains(self.seed, self.P, self.separation, self.scale, self.domains)
        return build_world(self.seed, self.P, self.D, self.hidden, specs)


@dataclass
class EvalConfig:
    k: int = 10
    samples: int = 1000
    pr_k: int = 3
    truncation: tuple = (0.5, 0.7, 1.0)


@dataclass
class RunConfig:
    seed: int = 0
    out: str = "runs/default"
    world: WorldConfig = field(default_factory=WorldConfig)
    pretrain: PretrainConfig = field(default_factory=PretrainConfig)
    K: int = 6
    eps: float | None = None
    stage1: Stage1Config = field(default_factory=Stage1Config)
    source: str = "src"
    target: str = "trg"
    stage2: AdaptConfig = field(default_factory=AdaptConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def with_seed(self, seed: int) -> "RunConfig":
        """Copy with the run seed (not the world seed) replaced everywhere it is used."""
        cfg = parse_config(dump_config(self))
        cfg.seed = cfg.pretrain.seed = cfg.stage1.seed = cfg.stage2.seed = int(seed)
        return cfg

    def adapt_config(self, **overrides) -> AdaptConfig:
        base = {f.name: getattr(self.stage2, f.name) for f in fields(AdaptConfig)}
        base.update(seed=self.seed, eval_k=self.eval.k, pr_k=self.eval.pr_k)
        base.update(overrides)
        return AdaptConfig(**base)

    def hash(self) -> str:
        """Digest of everything that affects results (the output directory does not)."""
        text = dump_config(self).replace(f"\nout = {self.out}\n", "\n", 1)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def _floats(text: str) -> tuple:
    return tuple(float(x) for x in text.replace(",", " ").split())


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _betas(text: str) -> tuple:
    b = _floats(text)
    if len(b) != 2 or not all(0.0 <= x < 1.0 for x in b):
        raise ValueError("betas need two values in [0, 1)")
    return b


def _nonneg(conv):
    def check(text):
        v = conv(text)
        if v < 0:
            raise ValueError("must be >= 0")
        return v
    return check


def _pos(conv):
    def check(text):
        v = conv(text)
        if v <= 0:
            raise ValueError("must be > 0")
        return v
    return check


def _eps(text: str):
    return None if text.strip().lower() in ("", "auto") else _pos(float)(text)


def _names(text: str) -> tuple:
    names = tuple(n.strip() for n in text.split(",") if n.strip())
    if len(names) < 2:
        raise ValueError("need at least two domain names")
    return names


# section -> key -> (converter, destination path)
_SCHEMA = {
    "run": {"seed": (_nonneg(int), "seed"), "out": (str, "out")},
    "world": {
        "seed": (_nonneg(int), "world.seed"), "P": (_pos(int), "world.P"),
        "D": (_pos(int), "world.D"), "hidden": (_pos(int), "world.hidden"),
        "domains": (_names, "world.domains"), "separation": (_pos(float), "world.separation"),
        "scale": (_pos(float), "world.scale"),
    },
    "pretrain": {
        "iters": (_nonneg(int), "pretrain.iters"), "batch": (_pos(int), "pretrain.batch"),
        "lr": (_pos(float), "pretrain.lr"), "betas": (_betas, "pretrain.betas"),
        "bandwidth_every": (_pos(int), "pretrain.bandwidth_every"),
    },
    "stage1": {
        "K": (_pos(int), "K"), "iters": (_nonneg(int), "stage1.iters"),
        "lr": (_pos(float), "stage1.lr"), "betas": (_betas, "stage1.betas"),
        "lambda_div": (_nonneg(float), "stage1.lambda_div"), "eps": (_eps, "eps"),
    },
    "stage2": {
        "source": (str, "source"), "target": (str, "target"),
        "N": (_pos(int), "stage2.N"), "iters": (_nonneg(int), "stage2.iters"),
        "lr": (_pos(float), "stage2.lr"), "betas": (_betas, "stage2.betas"),
        "lambda_cov": (_nonneg(float), "stage2.lambda_cov"),
        "lambda_ewc": (_nonneg(float), "stage2.lambda_ewc"),
        "lambda_rel": (_nonneg(float), "stage2.lambda_rel"),
        "fisher_samples": (_pos(int), "stage2.fisher_samples"),
        "eval_every": (_pos(int), "stage2.eval_every"),
        "heldout": (_pos(int), "stage2.eval_samples"),
        "loss_mode": (canonical_mode, "stage2.loss_mode"),
        "gram_normalize": (_bool, "stage2.gram_normalize"),
    },
    "eval": {
        "k": (_pos(int), "eval.k"), "samples": (_pos(int), "eval.samples"),
        "pr_k": (_pos(int), "eval.pr_k"), "truncation": (_floats, "eval.truncation"),
    },
}


def _set(cfg: RunConfig, path: str, value) -> None:
    obj = cfg
    *parents, leaf = path.split(".")
    for p in parents:
        obj = getattr(obj, p)
    setattr(obj, leaf, value)


def _get(cfg: RunConfig, path: str):
    obj = cfg
    for p in path.split("."):
        obj = getattr(obj, p)
    return obj


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"),
                                       inline_comment_prefixes=("#",))
    parser.optionxform = str  # keys are case sensitive (P, D, K, N)
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        if line is None and getattr(exc, "errors", None):
            line = exc.errors[0][0]
        where = f"{source}, line {line}" if line else source
        raise ConfigError(f"{where}: {exc.message.splitlines()[0]}") from exc

    cfg = RunConfig()
    for section in parser.sections():
        if section.startswith("domain."):
            continue
        if section not in _SCHEMA:
            raise ConfigError(f"{source}: unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"{source}: unknown key {section}.{key}")
            conv, dest = _SCHEMA[section][key]
            try:
                _set(cfg, dest, conv(raw))
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{source}: bad value for {section}.{key} = {raw!r}: {exc}") from exc

    custom = {}
    for section in parser.sections():
        if not section.startswith("domain."):
            continue
        name = section[len("domain."):]
        keys = dict(parser.items(section))
        extra = set(keys) - {"mean", "scale"}
        if extra:
            raise ConfigError(f"{source}: unknown key {section}.{sorted(extra)[0]}")
        try:
            mean = np.array(_floats(keys["mean"]))
            scale = np.array(_floats(keys.get("scale", str(cfg.world.scale))))
        except KeyError as exc:
            raise ConfigError(f"{source}: {section}.mean is required") from exc
        except ValueError as exc:
            raise ConfigError(f"{source}: bad value in [{section}]: {exc}") from exc
        if scale.size == 1:
            scale = np.full(mean.shape, scale[0])
        custom[name] = (mean, scale)
    if custom:
        cfg.world.custom = custom
    _validate(cfg, source)
    return cfg


def _validate(cfg: RunConfig, source: str) -> None:
    names = cfg.world.domains
    if len(set(names)) != len(names):
        raise ConfigError(f"{source}: duplicate names in world.domains")
    if not cfg.world.custom and len(names) != 2:
        raise ConfigError(f"{source}: world.domains lists {len(names)} names; "
                          "more than two need [domain.NAME] sections")
    if cfg.world.custom:
        missing = [n for n in names if n not in cfg.world.custom]
        if missing:
            raise ConfigError(f"{source}: world.domains names {missing} have no [domain.NAME] section")
        unused = sorted(set(cfg.world.custom) - set(names))
        if unused:
            raise ConfigError(f"{source}: [domain.{unused[0]}] is not listed in world.domains")
        for n, (mean, scale) in cfg.world.custom.items():
            if mean.shape != (cfg.world.P,) or scale.shape != mean.shape:
                raise ConfigError(f"{source}: domain.{n} needs {cfg.world.P} mean and scale values")
            if np.any(scale <= 0):
                raise ConfigError(f"{source}: domain.{n}.scale must be positive")
    for key in ("source", "target"):
        if getattr(cfg, key) not in names:
            raise ConfigError(f"{source}: stage2.{key} = {getattr(cfg, key)!r} is not in world.domains")
    if cfg.source == cfg.target:
        raise ConfigError(f"{source}: stage2.source and stage2.target must differ")
    if cfg.K > cfg.world.D:
        raise ConfigError(f"{source}: stage1.K = {cfg.K} exceeds world.D = {cfg.world.D}")
    if cfg.stage2.loss_mode == "full" and cfg.stage2.N < 2:
        raise ConfigError(f"{source}: stage2.N must be >= 2 for loss_mode full")
    for n, where in ((cfg.eval.samples, "eval.samples"), (cfg.stage2.eval_samples, "stage2.heldout")):
        if cfg.eval.k > n or cfg.eval.pr_k >= n:
            raise ConfigError(f"{source}: eval.k and eval.pr_k must be below {where} = {n}")
    if not cfg.eval.truncation or any(not 0 < p <= 1 for p in cfg.eval.truncation):
        raise ConfigError(f"{source}: eval.truncation values must lie in (0, 1]")
    # propagate the run seed
    cfg.pretrain.seed = cfg.stage1.seed = cfg.stage2.seed = cfg.seed


def load_config(path) -> RunConfig:
    path = os.fspath(path)
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    return parse_config(text, path)


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)  # shortest exact round trip
    if isinstance(value, tuple):
        return ", ".join(_fmt(v) for v in value)
    if isinstance(value, np.ndarray):
        return ", ".join(repr(float(v)) for v in value)
    if value is None:
        return "auto"
    return str(value)


def dump_config(cfg: RunConfig) -> str:
    """Canonical text of ``cfg``; ``parse_config(dump_config(c)) == c``."""
    lines = []
    for section, keys in _SCHEMA.items():
        lines.append(f"[{section}]")
        for key, (_, dest) in keys.items():
            lines.append(f"{key} = {_fmt(_get(cfg, dest))}")
        lines.append("")
    for name in cfg.world.domains if cfg.world.custom else ():
        mean, scale = cfg.world.custom[name]
        lines += [f"[domain.{name}]", f"mean = {_fmt(mean)}", f"scale = {_fmt(scale)}", ""]
    return "\n".join(lines)


def configs_equal(a: RunConfig, b: RunConfig) -> bool:
    return dump_config(a) == dump_config(b)


# checkpoints --------------------------------------------------------------

KINDS = ("world", "generator", "variations", "fisher")
_MAGIC = "varadapt-checkpoint"


def _kind_of(obj) -> str:
    for kind, cls in (("world", World), ("generator", GeneratorParams),
                      ("variations", VariationSet), ("fisher", FisherDiag)):
        if isinstance(obj, cls):
            return kind
    raise TypeError(f"cannot checkpoint a {type(obj).__name__}")


def _to_arrays(obj, kind: str) -> tuple[dict, dict]:
    if kind == "world":
        arrays = {k: obj.encoder[k] for k in ENCODER_KEYS}
        for d in obj.domains:
            arrays[f"domain.{d.name}.mean"] = d.mean
            arrays[f"domain.{d.name}.scale"] = d.scale
        meta = {"P": obj.P, "D": obj.D, "hidden": obj.hidden, "seed": obj.seed,
                "domains": obj.domain_names}
        return arrays, meta
    if kind == "generator":
        return {k: obj.arrays[k] for k in sorted(obj.arrays)}, {}
    if kind == "variations":
        hist = np.array(obj.history, dtype=np.float64).reshape(-1, 3)
        return ({"target": obj.target, "Z": obj.Z, "history": hist},
                {"epsilon": float(obj.epsilon)})
    return {k: obj.arrays[k] for k in sorted(obj.arrays)}, {"samples": obj.samples}


def _from_arrays(kind: str, arrays: dict, meta: dict):
    if kind == "world":
        domains = tuple(DomainSpec(n, arrays[f"domain.{n}.mean"], arrays[f"domain.{n}.scale"])
                        for n in meta["domains"])
        enc = {}
        for k in ENCODER_KEYS:
            a = arrays[k].copy()
            a.setflags(write=False)
            enc[k] = a
        return World(int(meta["P"]), int(meta["D"]), int(meta["hidden"]), domains, enc,
                     int(meta["seed"]))
    if kind == "generator":
        return GeneratorParams(arrays)
    if kind == "variations":
        hist = [tuple(r) for r in arrays["history"]]
        return VariationSet(arrays["target"], arrays["Z"], float(meta["epsilon"]), hist)
    return FisherDiag(arrays, int(meta["samples"]))


def _number(x: float) -> str:
    if not math.isfinite(x):
        raise CheckpointError("checkpoints hold finite values only")
    if x == 0.0 and math.copysign(1.0, x) < 0:
        return "-0.0"  # "-0" would parse back as the integer 0
    return format(x, ".17g")


def checkpoint_text(obj, meta: dict | None = None) -> str:
    kind = _kind_of(obj)
    arrays, own_meta = _to_arrays(obj, kind)
    meta = {**(meta or {}), **own_meta}
    parts = [
        "{",
        f'  "format": "{_MAGIC}",',
        '  "version": 1,',
        f'  "kind": "{kind}",',
        f'  "meta": {json.dumps(meta, sort_keys=True)},',
        '  "arrays": [',
    ]
    items = list(arrays.items())
    for i, (name, a) in enumerate(items):
        a = np.asarray(a, dtype=np.float64)
        data = ", ".join(_number(float(x)) for x in a.ravel())
        sep = "," if i < len(items) - 1 else ""
        parts.append(f'    {{"name": {json.dumps(name)}, "shape": {json.dumps(list(a.shape))}, '
                     f'"data": [{data}]}}{sep}')
    parts += ["  ]", "}", ""]
    return "\n".join(parts)


def save_checkpoint(obj, path, meta: dict | None = None) -> None:
    """Write ``obj`` (world, generator, variations or Fisher) with optional metadata."""
    text = checkpoint_text(obj, meta)
    path = os.fspath(path)
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write checkpoint {path}: {exc.strerror}") from exc


def load_checkpoint(path, kind: str | None = None, config_hash: str | None = None):
    """Read a checkpoint; returns ``(obj, meta)``.

    ``kind`` enforces the tag. A ``config_hash`` differing from the stored one
    only logs a warning.
    """
    path = os.fspath(path)
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: not a complete checkpoint ({exc.msg} at line {exc.lineno})") from exc
    if not isinstance(doc, dict) or doc.get("format") != _MAGIC:
        raise CheckpointError(f"{path}: not a varadapt checkpoint")
    found = doc.get("kind")
    if found not in KINDS:
        raise CheckpointError(f"{path}: unknown kind {found!r}")
    if kind is not None and found != kind:
        raise CheckpointError(f"{path}: expected a {kind} checkpoint, found {found}")
    meta = doc.get("meta", {})
    arrays = {}
    for entry in doc.get("arrays", []):
        name, shape, data = entry["name"], tuple(entry["shape"]), entry["data"]
        if int(np.prod(shape, dtype=np.int64)) != len(data):
            raise CheckpointError(f"{path}: array {name!r} has {len(data)} values for shape {shape}")
        arrays[name] = np.array(data, dtype=np.float64).reshape(shape)
    stored = meta.get("config_hash")
    if config_hash is not None and stored is not None and stored != config_hash:
        log.warning("%s was written under config %s, current config is %s", path, stored, config_hash)
    try:
        obj = _from_arrays(found, arrays, meta)
    except (KeyError, ValueError, TypeError) as exc:
        raise CheckpointError(f"{path}: inconsistent {found} checkpoint: {exc}") from exc
    return obj, meta


# metrics CSV --------------------------------------------------------------

COLUMNS = MetricsReport.columns()


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return format(float(value), ".17g")


def write_metrics_csv(reports, path) -> None:
    reports = list(reports)
    if not reports:
        raise ValueError("write_metrics_csv needs at least one report")
    path = os.fspath(path)
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(COLUMNS)
            for r in reports:
                w.writerow([_cell(getattr(r, c)) for c in COLUMNS])
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write metrics to {path}: {exc.strerror}") from exc


def read_metrics_csv(path) -> list[MetricsReport]:
    with open(os.fspath(path), encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != COLUMNS:
        raise ValueError(f"{path}: unexpected header {rows[0] if rows else None}")
    out = []
    for row in rows[1:]:
        vals = {c: (None if v == "" else float(v)) for c, v in zip(COLUMNS, row)}
        vals["iter"] = int(vals["iter"])
        out.append(MetricsReport(**vals))
    return out


# SVG charts ---------------------------------------------------------------

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")


def _tick(v: float) -> str:
    return format(v, ".4g")


def render_svg_chart(series: dict, path, title: str = "", xlabel: str = "iteration",
                     ylabel: str = "", width: int = 640, height: int = 400) -> None:
    """Line chart of named ``(x, y)`` sequences, one polyline each, legend in input order."""
    if not series:
        raise ValueError("nothing to plot")
    clean = {}
    for name, (xs, ys) in series.items():
        xs, ys = np.asarray(xs, dtype=np.float64), np.asarray(ys, dtype=np.float64)
        if xs.size == 0 or xs.shape != ys.shape:
            raise ValueError(f"series {name!r} must be nonempty with matching x and y")
        if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
            raise ValueError(f"series {name!r} has non-finite values")
        clean[name] = (xs, ys)
    allx = np.concatenate([x for x, _ in clean.values()])
    ally = np.concatenate([y for _, y in clean.values()])
    x0, x1 = float(allx.min()), float(allx.max())
    y0, y1 = float(ally.min()), float(ally.max())
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    left, right, top, bottom = 70, 150, 40, 50
    pw, ph = width - left - right, height - top - bottom

    def px(x):
        return left + (x - x0) / (x1 - x0) * pw

    def py(y):
        return top + ph - (y - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
           f'<rect width="{width}" height="{height}" fill="white"/>']
    if title:
        out.append(f'<text x="{width / 2:.2f}" y="20" text-anchor="middle" font-size="14">'
                   f'{_escape(title)}</text>')
    out.append(f'<g stroke="black" stroke-width="1"><line x1="{left}" y1="{top + ph}" '
               f'x2="{left + pw}" y2="{top + ph}"/><line x1="{left}" y1="{top}" '
               f'x2="{left}" y2="{top + ph}"/></g>')
    for i in range(5):
        fx = x0 + (x1 - x0) * i / 4
        fy = y0 + (y1 - y0) * i / 4
        out.append(f'<text x="{px(fx):.2f}" y="{top + ph + 16}" text-anchor="middle">{_tick(fx)}</text>')
        out.append(f'<text x="{left - 6}" y="{py(fy) + 4:.2f}" text-anchor="end">{_tick(fy)}</text>')
    out.append(f'<text x="{left + pw / 2:.2f}" y="{height - 10}" text-anchor="middle">'
               f'{_escape(xlabel)}</text>')
    if ylabel:
        out.append(f'<text x="16" y="{top + ph / 2:.2f}" text-anchor="middle" '
                   f'transform="rotate(-90 16 {top + ph / 2:.2f})">{_escape(ylabel)}</text>')
    for i, (name, (xs, ys)) in enumerate(clean.items()):
        color = _PALETTE[i % len(_PALETTE)]
        pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(xs, ys))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        ly = top + 14 + 16 * i
        out.append(f'<g class="legend"><line x1="{left + pw + 12}" y1="{ly - 4}" '
                   f'x2="{left + pw + 32}" y2="{ly - 4}" stroke="{color}" stroke-width="2"/>'
                   f'<text x="{left + pw + 38}" y="{ly}">{_escape(name)}</text></g>')
    out.append("</svg>\n")
    path = os.fspath(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(out))


def _escape(s: str) -> str:
    return (str(s).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
            .replace('"', "&quot;"))

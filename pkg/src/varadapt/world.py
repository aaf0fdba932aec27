"""Frozen synthetic joint text/image embedding space.

Domains are axis-aligned Gaussian clusters in data space ``R^P``. A fixed
two-layer encoder ``x -> W2 tanh(W1 x + b1) + b2`` maps data into ``R^D``,
and the "text" embedding of a domain is the encoding of its mean, so text
and image features of a domain agree by construction.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .autodiff import Graph, Var
from .rng import make_rng

log = logging.getLogger(__name__)

ENCODER_KEYS = ("W1", "b1", "W2", "b2")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DomainSpec:
    name: str
    mean: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        mean = _frozen(self.mean)
        scale = _frozen(self.scale)
        if mean.ndim != 1 or scale.shape != mean.shape:
            raise ConfigError(f"domain {self.name!r}: mean and scale must be equal-length vectors")
        if np.any(scale <= 0):
            raise ConfigError(f"domain {self.name!r}: scales must be strictly positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "scale", scale)


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class World:
    P: int
    D: int
    hidden: int
    domains: tuple[DomainSpec, ...]
    encoder: dict
    seed: int

    def domain(self, name: str) -> DomainSpec:
        for d in self.domains:
            if d.name == name:
                return d
        raise KeyError(f"unknown domain {name!r}")

    @property
    def domain_names(self) -> list[str]:
        return [d.name for d in self.domains]


def build_world(seed: int, P: int, D: int, hidden: int,
                domains: Sequence[DomainSpec]) -> World:
    """Draw encoder weights ``Normal(0, 1/sqrt(fan_in))`` from ``seed`` and freeze them."""
    if min(P, D, hidden) < 1:
        raise ConfigError("P, D and hidden must be >= 1")
    if len(domains) < 2:
        raise ConfigError("a world needs at least two domains")
    names = [d.name for d in domains]
    if len(set(names)) != len(names):
        raise ConfigError(f"duplicate domain names in {names}")
    for d in domains:
        if d.mean.shape != (P,):
            raise ConfigError(f"domain {d.name!r}: mean has dimension {d.mean.shape[0]}, world P={P}")
    rng = make_rng(seed, "encoder")
    enc = {
        "W1": rng.normal(0.0, 1.0 / np.sqrt(P), size=(hidden, P)),
        "b1": rng.normal(0.0, 1.0 / np.sqrt(P), size=hidden),
        "W2": rng.normal(0.0, 1.0 / np.sqrt(hidden), size=(D, hidden)),
        "b2": rng.normal(0.0, 1.0 / np.sqrt(hidden), size=D),
    }
    world = World(P, D, hidden, tuple(domains), {k: _frozen(v) for k, v in enc.items()}, int(seed))
    _check_separation(world)
    return world


def _check_separation(world: World) -> None:
    texts = [encode_text(world, n) for n in world.domain_names]
    for i in range(len(texts)):
        for j in range(i + 1, len(texts)):
            a, b = texts[i], texts[j]
            c = float(a @ b / max(np.linalg.norm(a) * np.linalg.norm(b), 1e-24))
            if c >= 0.99:
                log.warning("domains %s and %s have text cosine %.4f >= 0.99; consider re-seeding",
                            world.domains[i].name, world.domains[j].name, c)


def default_domains(seed: int, P: int = 8, separation: float = 4.0,
                    scale: float = 0.7, names=("src", "trg")) -> list[DomainSpec]:
    """Two clusters whose means are ``separation`` apart along a random direction."""
    rng = make_rng(seed, "domains")
    center = rng.normal(0.0, 1.0, size=P)
    u = rng.normal(size=P)
    u /= np.linalg.norm(u)
    half = 0.5 * separation * u
    return [DomainSpec(names[0], center - half, np.full(P, scale)),
            DomainSpec(names[1], center + half, np.full(P, scale))]


def default_world(seed: int = 7) -> World:
    return build_world(seed, 8, 16, 32, default_domains(seed))


def encode_image(world: World, x) -> np.ndarray:
    """Embed one sample (``P``) or a batch (``n x P``)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != world.P or x.ndim not in (1, 2):
        raise ValueError(f"expected trailing dimension {world.P}, got shape {x.shape}")
    e = world.encoder
    return np.tanh(x @ e["W1"].T + e["b1"]) @ e["W2"].T + e["b2"]


def encode_text(world: World, name: str) -> np.ndarray:
    return encode_image(world, world.domain(name).mean)


def sample_domain(world: World, name: str, n: int, rng: np.random.Generator) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be >= 1")
    d = world.domain(name)
    return d.mean + d.scale * rng.standard_normal((n, world.P))


def encoder_graph(g: Graph, world: World, x: Var, prefix: str = "enc.") -> Var:
    """Append the encoder to ``g``; its weights are constants named ``prefix + key``."""
    if prefix + "W1" not in g.inputs:
        for k in ENCODER_KEYS:
            g.const(prefix + k, world.encoder[k].shape)
    W1, b1, W2, b2 = (g.var(prefix + k) for k in ENCODER_KEYS)
    return g.tanh(x @ W1.T + b1) @ W2.T + b2


def encoder_bindings(world: World, prefix: str = "enc.") -> dict:
    return {prefix + k: world.encoder[k] for k in ENCODER_KEYS}

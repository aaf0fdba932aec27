"""Bias-corrected Adam over a dict of named parameter arrays."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

BETAS = (0.0, 0.99)
LR = 0.002
EPS = 1e-8


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def adam_step(params: dict, grads: dict, state: AdamState, lr: float = LR,
              beta1: float = BETAS[0], beta2: float = BETAS[1], eps: float = EPS):
    """One Adam update; returns new ``(params, state)`` and leaves the inputs untouched.

    Parameters without an entry in ``grads`` are carried over unchanged.
    """
    if not (0.0 <= beta1 < 1.0 and 0.0 <= beta2 < 1.0):
        raise ValueError(f"betas must lie in [0, 1), got {(beta1, beta2)}")
    if eps <= 0:
        raise ValueError("eps must be positive")
    t = state.t + 1
    new_params, new_m, new_v = dict(params), dict(state.m), dict(state.v)
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for name, g in grads.items():
        g = np.asarray(g, dtype=np.float64)
        p = params[name]
        if g.shape != np.shape(p):
            raise ValueError(f"gradient for {name!r} has shape {g.shape}, parameter {np.shape(p)}")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient in parameter block {name!r}")
        m = beta1 * state.m.get(name, 0.0) + (1.0 - beta1) * g
        v = beta2 * state.v.get(name, 0.0) + (1.0 - beta2) * g * g
        new_params[name] = p - lr * (m / c1) / (np.sqrt(v / c2) + eps)
        new_m[name] = m
        new_v[name] = v
    return new_params, AdamState(new_m, new_v, t)


class Adam:
    """Stateful convenience wrapper used by the training loops."""

    def __init__(self, lr: float = LR, betas=BETAS, eps: float = EPS):
        self.lr = lr
        self.betas = tuple(betas)
        self.eps = eps
        self.state = AdamState()

    def step(self, params: dict, grads: dict) -> dict:
        params, self.state = adam_step(params, grads, self.state, self.lr,
                                       self.betas[0], self.betas[1], self.eps)
        return params

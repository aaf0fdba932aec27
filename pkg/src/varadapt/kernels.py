"""Kernel backend selection.

The compiled ``_kernels`` extension is used when it was built; otherwise the
numpy versions in ``_kernels_py`` are used. ``use_backend`` switches at runtime
(tests and the benchmark run both).
"""

from __future__ import annotations

import logging

from . import _kernels_py

log = logging.getLogger(__name__)

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

_BACKENDS = {"python": _kernels_py}
if _compiled is not None:
    _BACKENDS["cython"] = _compiled

BACKEND = "cython" if _compiled is not None else "python"
_active = _BACKENDS[BACKEND]


def available() -> list[str]:
    return list(_BACKENDS)


def use_backend(name: str) -> None:
    global BACKEND, _active
    if name not in _BACKENDS:
        raise ValueError(f"backend {name!r} is not available (have {available()})")
    BACKEND, _active = name, _BACKENDS[name]


def pairwise_distances(X, Y=None):
    return _active.pairwise_distances(X, X if Y is None else Y)


def pam_build(D, k: int):
    return _active.pam_build(D, k)


def pam_swap(D, medoids, max_iter: int):
    return _active.pam_swap(D, medoids, max_iter)


def assign(D, medoids):
    return _active.assign(D, medoids)

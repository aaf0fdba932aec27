"""Seeded random streams.

Every stream is a Philox-4x64 counter-based generator keyed by
``SeedSequence([seed, len(stream), *stream])``, so separate stages of one run draw from
independent, reproducible streams without sharing state.
"""

from __future__ import annotations

import zlib

import numpy as np


def _tag(part) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode())
    return int(part)


def make_rng(seed: int, *stream) -> np.random.Generator:
    # the length word keeps ("a",) and ("a", 0) apart: trailing zero words do not change the entropy
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF, len(stream), *(_tag(s) for s in stream)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))

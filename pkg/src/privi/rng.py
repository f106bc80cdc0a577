"""Seeded random-number streams.

Every stochastic component takes a (seed, stream) pair instead of a bare
generator so that independent subsystems (batch shuffling, weight init,
mask sampling, ...) can draw from named streams without interfering.
Identical (seed, stream) pairs always produce identical draw sequences.
"""

from __future__ import annotations

import zlib

import numpy as np


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Deterministic generator for the given seed and stream id."""
    if seed < 0 or stream < 0:
        raise ValueError("seed and stream must be non-negative")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy=seed, spawn_key=(stream,))))


def stream_id(*parts: object) -> int:
    """Stable 32-bit stream id derived from arbitrary key parts.

    Uses crc32 rather than hash() so ids survive interpreter restarts.
    """
    text = "\x1f".join(str(p) for p in parts)
    return zlib.crc32(text.encode("utf-8"))

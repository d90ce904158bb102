"""Seeded, counter-based random streams."""

from __future__ import annotations

import zlib

import numpy as np


def _tag(t) -> int:
    if isinstance(t, (int, np.integer)):
        return int(t) & 0xFFFFFFFFFFFFFFFF
    return zlib.crc32(str(t).encode())


def make_rng(seed: int, *tags) -> np.random.Generator:
    """Philox generator keyed by ``seed`` and an optional path of tags.

    Distinct tag paths give statistically independent streams, so callers
    can hand out per-replicate or per-stage substreams without coordination.
    """
    entropy = [_tag(seed)] + [_tag(t) for t in tags]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def derive_seed(seed: int, *tags) -> int:
    """Deterministic 63-bit child seed."""
    entropy = [_tag(seed)] + [_tag(t) for t in tags]
    return int(np.random.SeedSequence(entropy).generate_state(1, np.uint64)[0] >> np.uint64(1))

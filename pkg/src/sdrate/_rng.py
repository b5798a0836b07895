"""Counter-based random streams keyed on integer tuples."""

from __future__ import annotations

import zlib

import numpy as np

# stream tags
DATA = 0
SPLIT = 1
SPLIT_AIPW = 2


def stream(seed: int, *keys: int) -> np.random.Generator:
    """Philox generator for ``(seed, *keys)``.

    Distinct key tuples give statistically independent streams, so replications
    can be generated in any order or in parallel without changing results.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


def name_key(name: str) -> int:
    """Stable integer key for a string label."""
    return zlib.crc32(name.encode("utf-8"))


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)

"""Deterministic RNG plumbing.

All randomness in the pipeline flows from one integer seed.  Components that
need independent streams (clustering init, baseline strategies, synthetic
data) derive them by name so re-seeding one component never perturbs another.
Philox is used throughout: it is counter-based, so streams are stable across
platforms and process restarts.
"""

from __future__ import annotations

import numpy as np

# Fixed name -> lane mapping; extend only by appending, never renumber.
_STREAMS = {
    "kmeans": 0,
    "strategy": 1,
    "synthetic": 2,
    "means": 3,
    "instances": 4,
    "tokens": 5,
    "outliers": 6,
    "test": 7,
}


def substream(seed: int, name: str) -> np.random.Generator:
    """Return a generator for the named lane of ``seed``."""
    try:
        lane = _STREAMS[name]
    except KeyError:
        raise ValueError(f"unknown rng stream {name!r}") from None
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, lane])
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, name: str) -> int:
    """Collapse a named lane to a plain integer seed (for APIs that take one)."""
    try:
        lane = _STREAMS[name]
    except KeyError:
        raise ValueError(f"unknown rng stream {name!r}") from None
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, lane])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def generator(seed: int) -> np.random.Generator:
    """Philox generator seeded directly (no lane)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF])))

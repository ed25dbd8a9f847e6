"""Project-wide random number policy.

Every stochastic routine in this package draws from numpy's PCG64 generator.
Independent streams are derived from a single master seed with
``numpy.random.SeedSequence`` spawn keys, so a (seed, key path) pair always
names the same stream regardless of execution order or platform.
"""

from __future__ import annotations

import numpy as np


def rng_for(seed: int, *key: int) -> np.random.Generator:
    """Return the PCG64 generator for ``seed`` at spawn path ``key``.

    ``rng_for(s)`` is the root stream; ``rng_for(s, trial, 2)`` is the
    stream for purpose 2 inside trial ``trial``. Distinct key paths give
    statistically independent streams.
    """
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


def derive_seed(seed: int, *key: int) -> int:
    """Collapse (seed, key path) into a single 63-bit integer seed.

    Used where a config object carries one plain seed (e.g. channel
    generation) but the caller manages a hierarchy of streams.
    """
    state = np.random.SeedSequence(seed, spawn_key=tuple(key)).generate_state(1, np.uint64)[0]
    return int(state >> np.uint64(1))

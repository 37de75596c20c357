"""Counter-based random streams.

Every stochastic quantity in the package is drawn from a Philox generator
keyed by an explicit entropy tuple, so any run can be reproduced bit for bit
from its integer seed alone.  Replica r of a Monte Carlo estimate uses the
derived seed hash(base_seed, r); within a replica, the dataset, the label
noise, and each epoch's shuffle come from disjoint sub-streams.
"""

from __future__ import annotations

import numpy as np

# Sub-stream tags used by the simulation engine.
STREAM_DATA = 0
STREAM_NOISE = 1
STREAM_PERM = 2
STREAM_TRUTH = 3


def seed_sequence(seed: int, *key: int) -> np.random.SeedSequence:
    """SeedSequence for `seed` refined by an integer key path."""
    return np.random.SeedSequence(entropy=seed, spawn_key=tuple(key))


def generator(seed: int, *key: int) -> np.random.Generator:
    """Philox generator keyed by (seed, *key)."""
    return np.random.Generator(np.random.Philox(seed_sequence(seed, *key)))


def derive_seed(base_seed: int, *key: int) -> int:
    """Collapse (base_seed, *key) to a single 64-bit seed."""
    return int(seed_sequence(base_seed, *key).generate_state(1, np.uint64)[0])


def float_key(x: float) -> int:
    """Bit pattern of a float, usable as an entropy key component."""
    return int(np.float64(x).view(np.uint64))

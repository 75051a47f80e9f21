"""Counter-based sub-seeding from one master seed."""
from __future__ import annotations

import numpy as np


def seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def child(seed, *counters: int) -> np.random.SeedSequence:
    """Sub-seed addressed by ``counters``; independent of call order."""
    ss = seed_sequence(seed)
    return np.random.SeedSequence(ss.entropy, spawn_key=tuple(ss.spawn_key) + tuple(counters))


def children(seed, n: int) -> list[np.random.SeedSequence]:
    return [child(seed, i) for i in range(n)]

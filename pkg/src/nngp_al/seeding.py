"""Deterministic RNG derivation.

Every stochastic component derives its generator from an integer key path so
results are independent of execution order and schedule.
"""

import numpy as np

_MASK64 = (1 << 64) - 1


def derive_rng(*keys: int) -> np.random.Generator:
    """Generator seeded by a path of integer keys (negatives are wrapped)."""
    return np.random.default_rng([int(k) & _MASK64 for k in keys])

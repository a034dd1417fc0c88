"""Counter-based derivation of random streams from a single master seed.

Every consumer of randomness gets its own stream, addressed by a tuple of
non-negative integers appended to the master seed via
:class:`numpy.random.SeedSequence` ``spawn_key``. The same address always
yields the same stream, independent of which other streams were created
before it, so any stage of a pipeline can be rerun on its own.
"""

from __future__ import annotations

import numpy as np

# first element of every spawn key; keeps purposes from colliding
INIT = 0
SHUFFLE = 1
STEP = 2
EVAL = 3
ATTACK = 4
CORRUPT = 5
DATA = 6
GRADCHECK = 7


def derive(seed: int, *key: int) -> np.random.Generator:
    """Return the generator living at address ``key`` under ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def entropy_from(rng: np.random.Generator) -> int:
    """Draw a 63-bit integer used to root a family of child streams."""
    return int(rng.integers(0, 2**63 - 1))

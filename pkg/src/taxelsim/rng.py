"""Seed derivation.

Every stochastic stage draws from its own ``numpy.random.Generator`` (PCG64).
Sub-seeds are derived from a single root seed with splitmix64 so that one
integer controls the whole pipeline:

    derive_seed(root, stream) = splitmix64(root + (stream + 1) * GOLDEN) mod 2**64

Stream indices are fixed constants (see ``Stream``) and never reordered.
"""

from enum import IntEnum

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


class Stream(IntEnum):
    SIMULATE = 0
    ORACLE = 1
    SPLIT = 2
    TRAIN = 3
    CLASSIFY_TRIALS = 4
    CLASSIFY_TRAIN = 5
    CLASSIFY_SPLIT = 6


def splitmix64(x: int) -> int:
    z = (x + GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(root: int, stream: int) -> int:
    return splitmix64((int(root) + (int(stream) + 1) * GOLDEN) & MASK64)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed) & MASK64))

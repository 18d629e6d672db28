"""Seeded random streams.

Philox4x64-10 is counter-based, so a (seed, stream) pair gives the same
sequence on every platform numpy supports.
"""
import numpy as np

RNG_ALGORITHM = "philox4x64-10"

# stream ids used across the package
STREAM_INIT = 0
STREAM_SHUFFLE = 1
STREAM_RFF = 2
STREAM_SN = 3


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    if seed < 0 or stream < 0:
        raise ValueError("seed and stream must be non-negative")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(stream)])))

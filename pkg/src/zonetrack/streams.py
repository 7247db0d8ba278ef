"""Named, independent random streams derived from one master seed.

Each consumer asks for ``stream(seed, name, *keys)``; streams with different
names or keys never share state, so adding a consumer leaves the draws of
all others untouched.
"""

from __future__ import annotations

import zlib

import numpy as np

MAX_SEED = 2**64 - 1


def _name_key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def stream(seed: int, name: str, *keys: int) -> np.random.Generator:
    if not 0 <= seed <= MAX_SEED:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    seq = np.random.SeedSequence(seed, spawn_key=(_name_key(name), *(int(k) for k in keys)))
    return np.random.Generator(np.random.PCG64(seq))

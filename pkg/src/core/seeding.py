"""Independent, named random streams derived from a master seed."""

from __future__ import annotations

import zlib

import numpy as np


def derive_seed(master: int, purpose: str, *keys: int) -> int:
    """Derive a 63-bit seed from (master seed, purpose tag, keys...).

    Streams with different tags or keys are statistically independent, so
    adding an attack stream never shifts the training or sampling streams.
    """
    if master < 0 or any(k < 0 for k in keys):
        raise ValueError("seeds and stream keys must be non-negative")
    entropy = [int(master), zlib.crc32(purpose.encode("utf-8")), *(int(k) for k in keys)]
    state = np.random.SeedSequence(entropy).generate_state(2, dtype=np.uint32)
    return (int(state[0]) << 31) ^ int(state[1])


def stream(master: int, purpose: str, *keys: int) -> np.random.Generator:
    """Return a generator for the named stream."""
    return np.random.default_rng(derive_seed(master, purpose, *keys))

"""Named sub-seed derivation so one root seed drives every random stream."""
from __future__ import annotations

import zlib

import numpy as np


def derive_rng(root_seed: int, name: str) -> np.random.Generator:
    """Return a generator for the stream ``name`` under ``root_seed``.

    Streams with different names are statistically independent, and the
    derivation is stable across platforms (CRC32 of the name).
    """
    if root_seed < 0:
        raise ValueError("root seed must be non-negative")
    return np.random.default_rng([root_seed, zlib.crc32(name.encode("utf-8"))])

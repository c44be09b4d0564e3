"""Seeded random streams.

Every stochastic stage draws from its own PCG64 stream.  Stage seeds are
derived from a root seed and a stage name, so a whole run is reproduced from
one integer.
"""

import hashlib

import numpy as np


def make_rng(seed):
    return np.random.Generator(np.random.PCG64(int(seed)))


def derive_seed(root, name):
    """64-bit seed for stage ``name`` under ``root``."""
    digest = hashlib.sha256(f"{int(root)}:{name}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")

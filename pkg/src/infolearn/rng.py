"""Deterministic RNG stream derivation.

Every stochastic object gets its own PCG64 stream whose seed is a stable
hash of (master_seed, purpose tag, indices).  This makes sweeps a pure
function of the master seed regardless of execution order.
"""

import hashlib

import numpy as np


def derive_seed(master_seed, *parts):
    """Stable 64-bit seed from a master seed and arbitrary string/int parts."""
    h = hashlib.sha256()
    h.update(str(int(master_seed)).encode())
    for p in parts:
        h.update(b"/")
        h.update(str(p).encode())
    return int.from_bytes(h.digest()[:8], "little")


def derive_rng(master_seed, *parts):
    """A numpy Generator (PCG64) on its own stream."""
    return np.random.default_rng(derive_seed(master_seed, *parts))

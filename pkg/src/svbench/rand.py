"""Deterministic randomness for the benchmark pipeline.

Every randomized stage derives its generator from the master seed plus a
string scope (typically the utterance id and the stage name), so results do
not depend on processing order, worker count, or platform.  Philox is a
counter-based generator with a stable cross-platform stream.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_key(seed: int, *scope: str) -> int:
    """Return a 128-bit key from a master seed and scope strings."""
    h = hashlib.sha256()
    h.update(int(seed).to_bytes(8, "little", signed=False))
    for token in scope:
        data = token.encode("utf-8")
        h.update(len(data).to_bytes(4, "little"))
        h.update(data)
    return int.from_bytes(h.digest()[:16], "little")


def derive_rng(seed: int, *scope: str) -> np.random.Generator:
    """Generator keyed by (seed, scope); identical across runs and machines."""
    return np.random.Generator(np.random.Philox(key=derive_key(seed, *scope)))


def derive_uniform(seed: int, *scope: str) -> float:
    """One deterministic uniform draw in [0, 1) for the given scope."""
    return float(derive_rng(seed, *scope).random())

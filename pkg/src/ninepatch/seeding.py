"""Deterministic RNG derivation from a single top-level seed.

Every consumer of randomness (weight init, shuffling, dropout, balancing)
derives its own generator from ``(seed, purpose, *indices)`` so runs replay
exactly regardless of execution order or worker count.
"""

from __future__ import annotations

import zlib

import numpy as np


def derive_rng(seed: int, purpose: str, *indices: int) -> np.random.Generator:
    """Return a Generator unique to (seed, purpose, indices).

    The purpose string is hashed with crc32, which is stable across runs
    and Python versions (unlike the builtin hash).
    """
    entropy = [int(seed) & 0xFFFFFFFF, zlib.crc32(purpose.encode("utf-8"))]
    entropy.extend(int(i) & 0xFFFFFFFF for i in indices)
    return np.random.default_rng(np.random.SeedSequence(entropy))


def derive_seed(seed: int, purpose: str, *indices: int) -> int:
    """Derived integer seed, for components that take a seed rather than a
    Generator (e.g. per-fold network configs)."""
    return int(derive_rng(seed, purpose, *indices).integers(0, 2**63))

"""Keyed random substreams derived from a single 64-bit master seed.

Every random draw in a run is taken from a generator whose seed is a
splitmix64 hash of ``(master_seed, label, *indices)``.  Draw order inside one
round therefore never affects the values another node or link sees.
"""

from __future__ import annotations

import zlib

import numpy as np

_MASK = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """One splitmix64 output step for state ``x``."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def _label_code(label: str) -> int:
    return zlib.crc32(label.encode("utf-8")) & 0xFFFFFFFF


def derive_seed(seed: int, label: str, *indices: int) -> int:
    """Fold a label and integer indices into ``seed`` with splitmix64."""
    h = splitmix64(int(seed) & _MASK)
    h = splitmix64(h ^ _label_code(label))
    for idx in indices:
        h = splitmix64(h ^ (int(idx) & _MASK))
    return h


def substream(seed: int, label: str, *indices: int) -> np.random.Generator:
    """Independent numpy generator for the keyed stream."""
    return np.random.Generator(np.random.PCG64(derive_seed(seed, label, *indices)))

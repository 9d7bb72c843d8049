"""Seeded randomness streams.

Every random choice in a run flows from ``(seed, labels...)`` so that a
session is replayable bit-for-bit.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _label_words(labels) -> list[int]:
    h = hashlib.sha3_256()
    for label in labels:
        h.update(repr(label).encode())
        h.update(b"\x00")
    d = h.digest()
    return [int.from_bytes(d[i:i + 4], "little") for i in range(0, 32, 4)]


def derive_rng(seed: int, *labels) -> np.random.Generator:
    """Independent generator for a named sub-stream of ``seed``."""
    entropy = [seed & 0xFFFFFFFF, (seed >> 32) & 0xFFFFFFFF] + _label_words(labels)
    return np.random.default_rng(np.random.SeedSequence(entropy))


def field_elements(rng: np.random.Generator, p: int, count: int) -> list[int]:
    if count <= 0:
        return []
    return rng.integers(0, p, size=count, dtype=np.uint64).tolist()


def random_bytes(rng: np.random.Generator, count: int) -> bytes:
    return rng.bytes(count)

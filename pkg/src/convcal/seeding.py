"""Deterministic seed derivation.

Every randomized stage (weight init, loss draws, dropout, shuffling) pulls
its generator from a named substream of one user-facing seed, so toggling a
stage on or off never shifts the randomness of the others.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(seed: int, *labels: object) -> int:
    """Derive a child seed from `seed` and a label path, stable across runs."""
    text = str(int(seed)) + "".join("/" + str(label) for label in labels)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def substream(seed: int, *labels: object) -> np.random.Generator:
    """A fresh generator for the named substream of `seed`."""
    return np.random.default_rng(derive_seed(seed, *labels))

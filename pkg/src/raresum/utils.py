"""Small shared helpers: stable seed derivation and float formatting."""

from __future__ import annotations

import hashlib

import numpy as np


def stable_hash(*labels) -> int:
    """63-bit integer hash of the labels, stable across runs and platforms."""
    text = "|".join(str(x) for x in labels)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def derive_seed(base: int, *labels) -> int:
    """Child seed for a labelled sub-task of a run with base seed `base`."""
    return (int(base) ^ stable_hash(*labels)) & (2**63 - 1)


def replicate_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for one replicate; identical under any scheduling."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), 2, int(index)]))


def chain_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), 1]))


def fmt_float(x: float) -> str:
    if isinstance(x, float) and np.isnan(x):
        return "nan"
    return format(float(x), ".12g")

"""Deterministic random substreams derived from one 64-bit master seed.

Every randomized unit of work (a sample chunk, a dataset, a chain, a batch of
test draws) gets its own PCG64 generator seeded with
``SeedSequence(master_seed, spawn_key=(purpose, i, j, ...))``. The purpose
codes below are part of the reproducibility contract and must not change.
"""

from __future__ import annotations

import os
import secrets

import numpy as np

from .errors import ValidationError

VOLUME = 1
DATA = 2
CHAIN = 3
TEST = 4
PRIOR = 5
TEMPER = 6

MAX_SEED = 2**64 - 1


def check_seed(seed) -> int:
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise ValidationError(f"seed must be an integer, got {seed!r}")
    if not 0 <= seed <= MAX_SEED:
        raise ValidationError(f"seed must lie in [0, 2**64), got {seed}")
    return int(seed)


def auto_seed() -> int:
    return secrets.randbits(64)


def resolve_seed(text: str | None) -> int:
    """Parse a CLI seed. ``auto`` draws a fresh one; missing seeds are refused."""
    if text is None:
        raise ValidationError("an explicit --seed is required (or pass --seed auto)")
    if text == "auto":
        return auto_seed()
    try:
        return check_seed(int(text, 0))
    except ValueError:
        raise ValidationError(f"cannot parse seed {text!r}") from None


def generator(seed: int, *key: int) -> np.random.Generator:
    """Generator for the substream ``key`` of ``seed``."""
    ss = np.random.SeedSequence(check_seed(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("RLCT_NMF_WORKERS", "1")))
    except ValueError:
        return 1

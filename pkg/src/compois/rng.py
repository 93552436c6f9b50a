"""Seedable, splittable random streams.

Thin wrappers over numpy's PCG64 Generator.  Parallel work must never share
one stream; spawn independent child streams instead, which keeps results
identical whether the children are consumed serially or concurrently.
"""

from __future__ import annotations

import os

import numpy as np

SEED_ENV_VAR = "COMPOIS_SEED"


def make_rng(seed: int | None = None) -> np.random.Generator:
    """Deterministic generator; same seed gives a bit-identical stream."""
    return np.random.default_rng(seed)


def split_rng(rng: np.random.Generator, n: int) -> list[np.random.Generator]:
    """n statistically independent child streams of rng (order-stable)."""
    return rng.spawn(n)


def resolve_seed(explicit: int | None = None) -> int | None:
    """Seed precedence: explicit argument, then COMPOIS_SEED, then None (fresh entropy)."""
    if explicit is not None:
        return explicit
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None and env != "":
        return int(env)
    return None

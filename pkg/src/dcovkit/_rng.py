"""Seeded counter-based random streams.

Every randomized routine derives its generator from ``(seed, *key)`` so
that replicate ``r`` sees the same numbers whatever order or thread it
runs in.
"""
from __future__ import annotations

import secrets
from typing import Optional

import numpy as np


def fresh_seed() -> int:
    """A seed drawn from OS entropy; callers echo it so runs can be repeated."""
    return secrets.randbits(63)


def resolve_seed(seed: Optional[int]) -> int:
    return fresh_seed() if seed is None else int(seed)


def stream(seed: Optional[int], *key: int) -> np.random.Generator:
    """Philox generator for the substream ``key`` of ``seed``."""
    if seed is None:
        seed = fresh_seed()
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))

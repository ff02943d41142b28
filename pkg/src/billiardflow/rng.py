"""Reproducible random streams.

Streams are counter-based (numpy Philox) and keyed by (seed, worker, purpose),
so results are independent of how work is split across workers: every
consumer asks for its own stream instead of sharing a mutated generator.
"""

from __future__ import annotations

import zlib

import numpy as np

__all__ = ["stream", "purpose_id"]


def purpose_id(purpose: str) -> int:
    """Stable 32-bit id for a purpose label."""
    return zlib.crc32(purpose.encode("utf-8"))


def stream(seed: int, worker: int = 0, purpose: str = "") -> np.random.Generator:
    """Philox generator keyed by (seed, worker, purpose).

    Distinct keys give statistically independent streams; identical keys give
    identical streams on every platform and for any worker-pool layout.
    """
    if seed is None:
        raise ValueError("seed is mandatory")
    seq = np.random.SeedSequence(int(seed), spawn_key=(int(worker), purpose_id(purpose)))
    return np.random.Generator(np.random.Philox(seq))

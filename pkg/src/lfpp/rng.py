"""Counter-based random streams.

Every stream is a Philox-4x64 generator keyed by ``(master_seed, purpose)``
whose 256-bit counter starts at ``(0, a, b, c)`` for the stream id
``(a, b, c)``.  Philox increments the low word first, so distinct ids give
disjoint counter ranges (2**64 blocks each) and a stream depends only on
its id, never on which worker draws it or in what order.
"""
from __future__ import annotations

import zlib

import numpy as np

MASK64 = (1 << 64) - 1


def purpose_code(purpose: str) -> int:
    return zlib.crc32(purpose.encode())


def stream(master_seed: int, purpose: str, *ids: int) -> np.random.Generator:
    if len(ids) > 3:
        raise ValueError("at most three stream id words")
    if any(i < 0 for i in ids):
        raise ValueError("stream ids must be nonnegative")
    words = [0, *ids] + [0] * (3 - len(ids))
    bitgen = np.random.Philox(counter=[w & MASK64 for w in words],
                              key=[master_seed & MASK64, purpose_code(purpose)])
    return np.random.Generator(bitgen)


def derive(rng: np.random.Generator) -> int:
    """Draw a 63-bit seed from ``rng`` for nested stream families."""
    return int(rng.integers(0, 2**63 - 1))

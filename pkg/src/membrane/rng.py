"""Seeded random streams keyed by (master seed, step, component key).

Streams are derived by hashing, never from call order, so scheduling and
worker count cannot influence the values any consumer sees.
"""
from __future__ import annotations

import hashlib
import random

MASK64 = (1 << 64) - 1


def derive_seed(seed: int, step: int, key: str) -> int:
    tag = f"{seed & MASK64}:{step}:{key}".encode()
    return int.from_bytes(hashlib.blake2b(tag, digest_size=8).digest(), "little")


class Rng:
    """Factory of independent ``random.Random`` streams under one master seed."""

    __slots__ = ("seed",)

    def __init__(self, seed: int = 0):
        self.seed = int(seed) & MASK64

    def stream(self, step: int, key: str) -> random.Random:
        return random.Random(derive_seed(self.seed, step, key))

    def __repr__(self) -> str:
        return f"Rng({self.seed})"

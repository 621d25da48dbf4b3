"""Named random streams.

Every random quantity is drawn from a stream derived from the run seed and
a key describing what is being sampled (which UE, hop, message, element).
Two runs that differ only in handover mode therefore see the same delay
for the same message on the same element: common random numbers.
"""
from __future__ import annotations

import hashlib
import random


def stream_seed(seed: int, *key) -> int:
    h = hashlib.blake2b(repr((seed,) + key).encode(), digest_size=8)
    return int.from_bytes(h.digest(), "big")


def stream(seed: int, *key) -> random.Random:
    return random.Random(stream_seed(seed, *key))


def exp_draw(seed: int, mean: float, *key) -> float:
    if mean <= 0:
        return 0.0
    return stream(seed, *key).expovariate(1.0 / mean)

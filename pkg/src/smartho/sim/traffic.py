"""Arrival processes: Poisson user packets and exponential handover gaps."""
from __future__ import annotations

from typing import Iterator, Optional

from .streams import stream

POISSON_USER = "PoissonUser"
EXPONENTIAL_HO = "ExponentialHo"


def generate_traffic(kind: str, rate: float, seed: int, start: float = 0.0,
                     count: Optional[int] = None) -> Iterator[float]:
    """Arrival instants of a process with i.i.d. exponential gaps of mean 1/rate."""
    if kind not in (POISSON_USER, EXPONENTIAL_HO):
        raise ValueError(f"unknown traffic kind {kind!r}")
    if not rate > 0:
        raise ValueError(f"rate must be positive, got {rate}")
    rng = stream(seed, "traffic", kind)
    t = start
    n = 0
    while count is None or n < count:
        t += rng.expovariate(rate)
        n += 1
        yield t


def gaps(kind: str, rate: float, seed: int, count: int) -> list:
    out, prev = [], 0.0
    for t in generate_traffic(kind, rate, seed, count=count):
        out.append(t - prev)
        prev = t
    return out

"""FIFO router with exponential service and a finite system capacity.

Background traffic is not scheduled as events: the router keeps the
Poisson background arrivals in its own random stream and plays them
forward (Lindley recursion) whenever a foreground packet is offered, so
a heavily loaded router costs time proportional to the background packets
that precede foreground traffic, and never blocks the event loop.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Optional

from .streams import stream


@dataclass
class RouterStats:
    name: str
    arrivals: int
    departures: int
    drops: int
    in_system: int
    fg_arrivals: int
    fg_drops: int
    bg_arrivals: int
    bg_drops: int

    @property
    def conserved(self) -> bool:
        return self.arrivals == self.departures + self.drops + self.in_system


class Router:
    def __init__(self, name: str, mu: float, buffer: Optional[int] = None,
                 bg_rate: float = 0.0, seed: int = 0):
        """``mu`` and ``bg_rate`` are per microsecond; ``buffer`` counts the
        packet in service (None = unbounded)."""
        if mu <= 0:
            raise ValueError(f"{name}: service rate must be positive")
        if buffer is not None and buffer < 1:
            raise ValueError(f"{name}: buffer must be >= 1")
        self.name = name
        self.mu = mu
        self.buffer = buffer
        self.bg_rate = bg_rate
        self._rng = stream(seed, "background", name)
        self._in: deque = deque()
        self._last_dep = 0.0
        self._next_bg = self._rng.expovariate(bg_rate) if bg_rate > 0 else math.inf
        self.departed = 0
        self.fg_arrivals = self.fg_drops = 0
        self.bg_arrivals = self.bg_drops = 0
        self.bg_served = 0
        self.bg_sojourn_sum = 0.0

    def _admit(self, t: float, service: float) -> Optional[float]:
        q = self._in
        while q and q[0] <= t:
            q.popleft()
            self.departed += 1
        if self.buffer is not None and len(q) >= self.buffer:
            return None
        dep = max(t, self._last_dep) + service
        q.append(dep)
        self._last_dep = dep
        return dep

    def advance(self, t: float) -> None:
        """Play background arrivals up to and including time ``t``."""
        rng = self._rng
        while self._next_bg <= t:
            at = self._next_bg
            service = rng.expovariate(self.mu)
            self.bg_arrivals += 1
            dep = self._admit(at, service)
            if dep is None:
                self.bg_drops += 1
            else:
                self.bg_served += 1
                self.bg_sojourn_sum += dep - at
            self._next_bg = at + rng.expovariate(self.bg_rate)

    def offer(self, t: float, service: float) -> Optional[float]:
        """Departure time of a foreground packet arriving at ``t``, or None if dropped."""
        self.advance(t)
        self.fg_arrivals += 1
        dep = self._admit(t, service)
        if dep is None:
            self.fg_drops += 1
        return dep

    def draw_service(self, rng) -> float:
        return rng.expovariate(self.mu)

    @property
    def mean_bg_sojourn(self) -> float:
        return self.bg_sojourn_sum / self.bg_served if self.bg_served else 0.0

    def stats(self, at: Optional[float] = None) -> RouterStats:
        if at is not None:
            while self._in and self._in[0] <= at:
                self._in.popleft()
                self.departed += 1
        arrivals = self.fg_arrivals + self.bg_arrivals
        drops = self.fg_drops + self.bg_drops
        return RouterStats(
            self.name, arrivals, self.departed, drops, len(self._in),
            self.fg_arrivals, self.fg_drops, self.bg_arrivals, self.bg_drops,
        )

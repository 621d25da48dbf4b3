"""Single-threaded event loop ordered by (time, schedule sequence)."""
from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

PACKET_ARRIVAL = "PacketArrival"
SERVICE_COMPLETE = "ServiceComplete"
TIMER_FIRE = "TimerFire"
KINDS = (PACKET_ARRIVAL, SERVICE_COMPLETE, TIMER_FIRE)


class ClockRegression(AssertionError):
    pass


@dataclass(order=True)
class Event:
    at: int
    seq: int
    kind: str = field(compare=False)
    node: str = field(compare=False, default="")
    payload: Any = field(compare=False, default=None)
    handler: Optional[Callable] = field(compare=False, default=None, repr=False)
    cancelled: bool = field(compare=False, default=False)


class Engine:
    def __init__(self):
        self.now = 0
        self._heap: list = []
        self._seq = 0
        self.executed = 0

    def schedule(self, at: int, handler: Callable, payload: Any = None,
                 kind: str = TIMER_FIRE, node: str = "") -> Event:
        at = int(at)
        if at < self.now:
            raise ClockRegression(f"event at {at} scheduled before current time {self.now}")
        if kind not in KINDS:
            raise ValueError(f"unknown event kind {kind!r}")
        ev = Event(at, self._seq, kind, node, payload, handler)
        self._seq += 1
        heapq.heappush(self._heap, ev)
        return ev

    def after(self, delay: int, handler: Callable, payload: Any = None,
              kind: str = TIMER_FIRE, node: str = "") -> Event:
        return self.schedule(self.now + int(delay), handler, payload, kind, node)

    @staticmethod
    def cancel(ev: Event) -> None:
        ev.cancelled = True

    def __len__(self) -> int:
        return len(self._heap)

    def step(self) -> Optional[Event]:
        while self._heap:
            ev = heapq.heappop(self._heap)
            if ev.cancelled:
                continue
            if ev.at < self.now:
                raise ClockRegression(f"event at {ev.at} popped at {self.now}")
            self.now = ev.at
            self.executed += 1
            ev.handler(ev)
            return ev
        return None

    def run_until_idle(self, until: Optional[int] = None) -> int:
        """Run events (optionally only those at or before ``until``); returns the clock."""
        while self._heap:
            if until is not None and self._heap[0].at > until:
                break
            self.step()
        return self.now

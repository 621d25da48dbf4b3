"""Closed-form delay budget for pre-allocating handover resources.

Routers on the DU-CU paths are M/M/1/B queues, the CU and DU processing
units M/M/1 queues.  Every function here is unit-agnostic: rates are per
unit of time and results come back in that same unit.  A topology records
its unit in ``time_unit`` so callers can convert (``to_us``).
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import Optional, Sequence

TIME_UNITS_US = {"s": 1_000_000.0, "ms": 1_000.0, "us": 1.0}


class QueueModelError(ValueError):
    pass


class DegenerateRates(QueueModelError):
    pass


class Unstable(QueueModelError):
    pass


@dataclass(frozen=True)
class RouterParams:
    lam: float
    mu: float
    buffer: Optional[int] = None  # None = unbounded

    def __post_init__(self):
        if self.mu <= 0:
            raise QueueModelError(f"service rate must be positive, got {self.mu}")
        if self.lam < 0:
            raise QueueModelError(f"arrival rate must be non-negative, got {self.lam}")
        if self.buffer is not None and self.buffer < 1:
            raise QueueModelError(f"buffer must be >= 1, got {self.buffer}")

    @classmethod
    def from_dict(cls, d: dict) -> "RouterParams":
        buf = d.get("buffer")
        if buf in ("inf", "infinite", None):
            buf = None
        return cls(lam=float(d["lambda"]), mu=float(d["mu"]), buffer=None if buf is None else int(buf))

    def to_dict(self) -> dict:
        return {"lambda": self.lam, "mu": self.mu, "buffer": "inf" if self.buffer is None else self.buffer}


@dataclass(frozen=True)
class Rates:
    lam: float
    mu: float

    @classmethod
    def from_dict(cls, d) -> "Rates":
        if isinstance(d, (list, tuple)):
            return cls(float(d[0]), float(d[1]))
        return cls(float(d["lambda"]), float(d["mu"]))

    def to_dict(self) -> dict:
        return {"lambda": self.lam, "mu": self.mu}


@dataclass(frozen=True)
class PathTopology:
    routers_r_sd: tuple = ()
    routers_r_td: tuple = ()
    routers_sd_cu: tuple = ()
    routers_td_cu: tuple = ()
    t_pd_sdu_cu: float = 0.0
    t_pd_tdu_cu: float = 0.0
    rates_cu: Rates = Rates(0.0, 1.0)
    rates_sdu: Rates = Rates(0.0, 1.0)
    rates_tdu: Rates = Rates(0.0, 1.0)
    trigger_time: float = 0.0
    time_unit: str = "s"

    def __post_init__(self):
        if self.time_unit not in TIME_UNITS_US:
            raise QueueModelError(f"unknown time unit {self.time_unit!r}")
        for name in ("t_pd_sdu_cu", "t_pd_tdu_cu", "trigger_time"):
            if getattr(self, name) < 0:
                raise QueueModelError(f"{name} must be >= 0")

    @property
    def n_routers(self) -> int:
        # the printed total counts the RRH-Source_DU group twice; kept literal
        return len(self.routers_td_cu) + len(self.routers_sd_cu) + 2 * len(self.routers_r_sd)

    def to_us(self, value: float) -> float:
        return value * TIME_UNITS_US[self.time_unit]

    @classmethod
    def from_dict(cls, d: dict) -> "PathTopology":
        def routers(key):
            return tuple(RouterParams.from_dict(r) for r in d.get(key, ()))

        return cls(
            routers_r_sd=routers("routers_r_sd"),
            routers_r_td=routers("routers_r_td"),
            routers_sd_cu=routers("routers_sd_cu"),
            routers_td_cu=routers("routers_td_cu"),
            t_pd_sdu_cu=float(d.get("t_pd_sDU_CU", 0.0)),
            t_pd_tdu_cu=float(d.get("t_pd_tDU_CU", 0.0)),
            rates_cu=Rates.from_dict(d.get("rates_cu", (0.0, 1.0))),
            rates_sdu=Rates.from_dict(d.get("rates_sdu", (0.0, 1.0))),
            rates_tdu=Rates.from_dict(d.get("rates_tdu", (0.0, 1.0))),
            trigger_time=float(d.get("trigger_time", 0.0)),
            time_unit=d.get("time_unit", "s"),
        )

    def to_dict(self) -> dict:
        return {
            "time_unit": self.time_unit,
            "routers_r_sd": [r.to_dict() for r in self.routers_r_sd],
            "routers_r_td": [r.to_dict() for r in self.routers_r_td],
            "routers_sd_cu": [r.to_dict() for r in self.routers_sd_cu],
            "routers_td_cu": [r.to_dict() for r in self.routers_td_cu],
            "t_pd_sDU_CU": self.t_pd_sdu_cu,
            "t_pd_tDU_CU": self.t_pd_tdu_cu,
            "rates_cu": self.rates_cu.to_dict(),
            "rates_sdu": self.rates_sdu.to_dict(),
            "rates_tdu": self.rates_tdu.to_dict(),
            "trigger_time": self.trigger_time,
        }


@dataclass(frozen=True)
class DelayBudget:
    t_proc_rt: float
    t_proc_cd: float
    t_prep_ho: float
    t_trig: float
    t_delay: float
    t_delay_raw: float
    t_mr: float
    time_unit: str = "s"

    FIELDS = ("t_MR", "t_proc_rt", "t_proc_cd", "t_prep_HO", "t_trig", "t_delay", "t_delay_raw")

    def as_row(self) -> dict:
        return {
            "t_MR": self.t_mr,
            "t_proc_rt": self.t_proc_rt,
            "t_proc_cd": self.t_proc_cd,
            "t_prep_HO": self.t_prep_ho,
            "t_trig": self.t_trig,
            "t_delay": self.t_delay,
            "t_delay_raw": self.t_delay_raw,
        }

    def table(self) -> str:
        width = max(len(k) for k in self.FIELDS)
        return "\n".join(f"{k:<{width}}  {v:.6g} {self.time_unit}" for k, v in self.as_row().items())

    def csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=["time_unit", *self.FIELDS], lineterminator="\n")
        w.writeheader()
        w.writerow({"time_unit": self.time_unit, **self.as_row()})
        return buf.getvalue()


def mm1b_response(r: RouterParams) -> float:
    """Expected response of an M/M/1/B router, evaluated as printed.

    With an unbounded buffer only the first term survives.  The expression
    is zero at lam == 0, so it behaves like a queue-length quantity rather
    than a sojourn time; it is reproduced verbatim on purpose.
    """
    lam, mu, b = r.lam, r.mu, r.buffer
    if lam == mu:
        raise DegenerateRates(f"lambda == mu == {mu} makes the M/M/1/B expression singular")
    first = lam / (mu - lam)
    if b is None:
        return first
    # overflow guard: work with rho = lam/mu for the second term
    rho = lam / mu
    denom = 1.0 - rho ** b
    if denom == 0.0:
        raise DegenerateRates(f"mu^B == lambda^B for lambda={lam}, mu={mu}, B={b}")
    second = b * lam * rho ** b / (mu * denom)
    return first + second


def mm1_response(lam: float, mu: float) -> float:
    if lam >= mu:
        raise Unstable(f"lambda={lam} >= mu={mu}: M/M/1 queue has no steady state")
    return 1.0 / (mu - lam)


def _router_sum(routers: Sequence[RouterParams], path: str) -> float:
    total = 0.0
    for i, r in enumerate(routers):
        try:
            total += mm1b_response(r)
        except DegenerateRates as exc:
            raise DegenerateRates(f"{path} router {i}: {exc}") from exc
    return total


def proc_rt(topo: PathTopology) -> float:
    return 2.0 * (_router_sum(topo.routers_sd_cu, "sd_cu") + _router_sum(topo.routers_td_cu, "td_cu"))


def proc_cd(topo: PathTopology) -> float:
    # the CU term is deliberately absent
    try:
        s = mm1_response(topo.rates_sdu.lam, topo.rates_sdu.mu)
    except Unstable as exc:
        raise Unstable(f"S_DU: {exc}") from exc
    try:
        t = mm1_response(topo.rates_tdu.lam, topo.rates_tdu.mu)
    except Unstable as exc:
        raise Unstable(f"T_DU: {exc}") from exc
    return 2.0 * (s + t)


def cu_response(topo: PathTopology) -> float:
    return mm1_response(topo.rates_cu.lam, topo.rates_cu.mu)


def prep_ho_time(topo: PathTopology) -> float:
    return 2.0 * topo.t_pd_sdu_cu + 2.0 * topo.t_pd_tdu_cu + proc_rt(topo) + proc_cd(topo)


def trig_time(topo: PathTopology) -> float:
    return topo.trigger_time + topo.t_pd_tdu_cu + _router_sum(topo.routers_td_cu, "td_cu")


def raw_delay(t_mr: float, topo: PathTopology) -> float:
    return t_mr - (prep_ho_time(topo) - trig_time(topo))


def compute_delay(t_mr: float, topo: PathTopology) -> float:
    """Wait before firing the spoofed preparation; never negative."""
    if t_mr < 0:
        raise QueueModelError(f"t_MR must be >= 0, got {t_mr}")
    return max(0.0, raw_delay(t_mr, topo))


def delay_budget(t_mr: float, topo: PathTopology) -> DelayBudget:
    prep = prep_ho_time(topo)
    trig = trig_time(topo)
    raw = t_mr - (prep - trig)
    if t_mr < 0:
        raise QueueModelError(f"t_MR must be >= 0, got {t_mr}")
    return DelayBudget(
        t_proc_rt=proc_rt(topo),
        t_proc_cd=proc_cd(topo),
        t_prep_ho=prep,
        t_trig=trig,
        t_delay=max(0.0, raw),
        t_delay_raw=raw,
        t_mr=t_mr,
        time_unit=topo.time_unit,
    )


def load_topology(path) -> tuple[PathTopology, Optional[float]]:
    """Read a topology JSON file; returns the topology and its optional t_MR."""
    with open(path) as fh:
        d = json.load(fh)
    t_mr = d.get("t_MR")
    return PathTopology.from_dict(d), None if t_mr is None else float(t_mr)

"""Per-handover records, aggregates and CSV output."""
from __future__ import annotations

import csv
import io
import statistics
from dataclasses import dataclass, field
from typing import Optional

SCHEMA_VERSION = 1

HO_COLUMNS = (
    "schema_version", "config_hash", "seed", "mode", "tandem", "load",
    "ue_id", "hop_index", "t_mr_sent_us", "t_rrccr_received_us", "ho_time_us", "dropped",
)

FORWARDING_COLUMNS = (
    "schema_version", "config_hash", "seed", "mode", "transit_switches", "parallel_pings",
    "sent", "received", "drop_count", "avg_response_us",
)


class MissingTimestamp(Exception):
    pass


@dataclass(frozen=True)
class HoRecord:
    ue_id: int
    hop_index: int
    t_mr_sent: Optional[int]
    t_rrccr_received: Optional[int]
    ho_time: Optional[int]
    dropped: bool


def measure_ho(ue_id: int, hop: int, t_mr_sent: Optional[int], t_rrccr_received: Optional[int],
               drop_threshold: float) -> HoRecord:
    if t_mr_sent is None or t_rrccr_received is None:
        raise MissingTimestamp(f"ue {ue_id} hop {hop} has no {'MR' if t_mr_sent is None else 'RRCCR'} timestamp")
    ho = t_rrccr_received - t_mr_sent
    return HoRecord(ue_id, hop, t_mr_sent, t_rrccr_received, ho, ho > drop_threshold)


def unfinished(ue_id: int, hop: int, t_mr_sent: Optional[int]) -> HoRecord:
    return HoRecord(ue_id, hop, t_mr_sent, None, None, True)


def percentile(values, q: int) -> float:
    """Inclusive-method percentile, q in 1..99."""
    if not 1 <= q <= 99:
        raise ValueError("percentile q must be in 1..99")
    vals = sorted(values)
    if not vals:
        return float("nan")
    if len(vals) == 1:
        return float(vals[0])
    return statistics.quantiles(vals, n=100, method="inclusive")[q - 1]


@dataclass
class MetricsReport:
    mode: str
    tandem: int
    load: int
    seed: int
    config_hash: str
    drop_threshold_us: float
    records: list = field(default_factory=list)
    wasted_preallocations: int = 0
    total_time_us: int = 0
    counters: dict = field(default_factory=dict)
    trace: list = field(default_factory=list)

    @property
    def completed(self) -> list:
        return [r for r in self.records if r.ho_time is not None]

    def mean_ho_time(self) -> float:
        done = [r.ho_time for r in self.completed]
        return statistics.fmean(done) if done else float("nan")

    def percentile_ho_time(self, q: float) -> float:
        return percentile([r.ho_time for r in self.completed], q)

    def drop_pct(self) -> float:
        if not self.records:
            return 0.0
        return 100.0 * sum(r.dropped for r in self.records) / len(self.records)

    def per_ue_total(self) -> dict:
        """Sum of HO times per UE, only for UEs whose every hop completed."""
        totals: dict = {}
        broken = set()
        for r in self.records:
            if r.ho_time is None:
                broken.add(r.ue_id)
            else:
                totals[r.ue_id] = totals.get(r.ue_id, 0) + r.ho_time
        return {u: t for u, t in sorted(totals.items()) if u not in broken}

    def mean_total_ho_time(self) -> float:
        t = list(self.per_ue_total().values())
        return statistics.fmean(t) if t else float("nan")

    def aggregates(self) -> dict:
        return {
            "mode": self.mode,
            "tandem": self.tandem,
            "load": self.load,
            "seed": self.seed,
            "handovers": len(self.records),
            "mean_ho_time_us": self.mean_ho_time(),
            "p50_ho_time_us": self.percentile_ho_time(50),
            "p95_ho_time_us": self.percentile_ho_time(95),
            "mean_total_ho_time_us": self.mean_total_ho_time(),
            "drop_pct": self.drop_pct(),
            "wasted_preallocations": self.wasted_preallocations,
            "total_time_us": self.total_time_us,
        }

    def rows(self) -> list:
        out = []
        for r in sorted(self.records, key=lambda r: (r.ue_id, r.hop_index)):
            out.append({
                "schema_version": SCHEMA_VERSION,
                "config_hash": self.config_hash,
                "seed": self.seed,
                "mode": self.mode,
                "tandem": self.tandem,
                "load": self.load,
                "ue_id": r.ue_id,
                "hop_index": r.hop_index,
                "t_mr_sent_us": "" if r.t_mr_sent is None else r.t_mr_sent,
                "t_rrccr_received_us": "" if r.t_rrccr_received is None else r.t_rrccr_received,
                "ho_time_us": "" if r.ho_time is None else r.ho_time,
                "dropped": int(r.dropped),
            })
        return out

    def to_csv(self, header: bool = True) -> str:
        return write_csv(HO_COLUMNS, self.rows(), header)

    def trace_text(self) -> str:
        return "".join(e.line() + "\n" for e in self.trace)


@dataclass(frozen=True)
class ForwardingRecord:
    mode: str
    transit_switches: int
    parallel_pings: int
    sent: int
    received: int
    drop_count: int
    avg_response_us: float


def forwarding_csv(records, config_hash: str, seed: int, header: bool = True) -> str:
    rows = [
        {
            "schema_version": SCHEMA_VERSION,
            "config_hash": config_hash,
            "seed": seed,
            "mode": r.mode,
            "transit_switches": r.transit_switches,
            "parallel_pings": r.parallel_pings,
            "sent": r.sent,
            "received": r.received,
            "drop_count": r.drop_count,
            "avg_response_us": f"{r.avg_response_us:.6f}",
        }
        for r in records
    ]
    return write_csv(FORWARDING_COLUMNS, rows, header)


def write_csv(columns, rows, header: bool = True) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    if header:
        w.writeheader()
    for row in rows:
        w.writerow(row)
    return buf.getvalue()

"""Echo request/reply traffic across a chain of transit switches running
either tag-based or IP forwarding.

    h1 -- s1 -- s2 -- ... -- sN -- h2

Each switch serves both directions from one FIFO with a finite buffer;
the service time of a packet is the cost of its pipeline pass.  Ping
processes are Poisson and drawn from named streams, so tag and IP runs
see identical arrival instants.  The clock ticks in nanoseconds here,
because pipeline passes take a microsecond or two.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import asdict, dataclass, field

from .. import pipeline, wire
from ..pipeline import CostModel, Ipv4Header, ip_address
from ..wire import EthernetHeader, ForwardTag, Packet
from .engine import PACKET_ARRIVAL, SERVICE_COMPLETE, TIMER_FIRE, Engine
from .metrics import ForwardingRecord
from .streams import stream_seed
from .traffic import POISSON_USER, generate_traffic

TAG = "tag"
IP = "ip"
FORWARDING_MODES = (TAG, IP)

TOWARD_H1 = wire.port_bits(0)
TOWARD_H2 = wire.port_bits(1)
H1_MAC, H2_MAC = 0x020000000A01, 0x020000000A02
H1_IP, H2_IP = ip_address("10.0.0.1"), ip_address("10.0.0.2")
TAG_ETHER_TYPE = wire.ETH_TYPE_FORWARD
NS = 1000


@dataclass(frozen=True)
class ForwardingConfig:
    transit_switches: tuple = (1, 2, 4)
    loads: tuple = (0, 20, 40, 60)
    ping_interval_us: float = 200.0
    pings_per_process: int = 50
    switch_buffer: int = 32
    link_delay_us: float = 5.0
    payload_bytes: int = 56
    seed: int = 1
    cost_model: CostModel = field(default_factory=CostModel)

    def __post_init__(self):
        if not self.ping_interval_us > 0:
            raise ValueError("ping_interval_us must be positive")
        if self.pings_per_process < 1:
            raise ValueError("pings_per_process must be >= 1")
        if self.switch_buffer < 1:
            raise ValueError("switch_buffer must be >= 1")
        if any(n < 1 for n in self.transit_switches):
            raise ValueError("transit_switches entries must be >= 1")
        if any(p < 0 for p in self.loads):
            raise ValueError("loads must be >= 0")

    @classmethod
    def from_dict(cls, d: dict) -> "ForwardingConfig":
        kw = dict(d)
        for k in ("transit_switches", "loads"):
            if k in kw:
                kw[k] = tuple(kw[k])
        if "cost_model" in kw:
            kw["cost_model"] = CostModel.from_dict(kw["cost_model"])
        return cls(**kw)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["transit_switches"] = list(self.transit_switches)
        d["loads"] = list(self.loads)
        return d


def _frame(mode: str, to_h2: bool, payload: bytes) -> bytes:
    src, dst = (H1_MAC, H2_MAC) if to_h2 else (H2_MAC, H1_MAC)
    if mode == TAG:
        pkt = Packet(EthernetHeader(dst, src, TAG_ETHER_TYPE), ForwardTag(2 if to_h2 else 1), payload=payload)
        return wire.serialize(pkt)
    ip = Ipv4Header(H1_IP if to_h2 else H2_IP, H2_IP if to_h2 else H1_IP, total_length=20 + len(payload))
    return EthernetHeader(dst, src, wire.ETH_TYPE_IPV4).pack() + ip.pack() + payload


def _program(mode: str) -> pipeline.SwitchProgram:
    if mode == TAG:
        prog = pipeline.load_program("tag")
        prog.table_add("tag_forward", 2, "tag_port_forward", {"port": TOWARD_H2})
        prog.table_add("tag_forward", 1, "tag_port_forward", {"port": TOWARD_H1})
    elif mode == IP:
        prog = pipeline.load_program("ip")
        prog.table_add("ipv4_lpm", H2_IP, "ipv4_forward", {"port": TOWARD_H2})
        prog.table_add("ipv4_lpm", H1_IP, "ipv4_forward", {"port": TOWARD_H1})
    else:
        raise ValueError(f"forwarding mode must be one of {FORWARDING_MODES}, got {mode!r}")
    return prog


class _FifoSwitch:
    """Deterministic-service FIFO in front of a pipeline."""

    def __init__(self, index: int, switch: pipeline.Switch, capacity: int):
        self.index = index
        self.switch = switch
        self.capacity = capacity
        self._in: deque = deque()
        self._last = 0
        self.arrivals = self.drops = 0

    def offer(self, t: int, service: int):
        q = self._in
        while q and q[0] <= t:
            q.popleft()
        self.arrivals += 1
        if len(q) >= self.capacity:
            self.drops += 1
            return None
        dep = max(t, self._last) + service
        q.append(dep)
        self._last = dep
        return dep


class _Run:
    def __init__(self, mode: str, n: int, load: int, cfg: ForwardingConfig):
        self.mode = mode
        self.cfg = cfg
        self.eng = Engine()
        sw = pipeline.Switch(_program(mode), cfg.cost_model)
        # one program instance per hop keeps per-switch counters apart
        self.switches = [_FifoSwitch(i, pipeline.Switch(sw.program, cfg.cost_model), cfg.switch_buffer) for i in range(n)]
        self.link = round(cfg.link_delay_us * NS)
        payload = bytes(cfg.payload_bytes)
        self.frames = {True: _frame(mode, True, payload), False: _frame(mode, False, payload)}
        self.load = load
        self.sent = self.received = 0
        self.rtt_sum = 0

    def start(self) -> None:
        rate = 1.0 / (self.cfg.ping_interval_us * NS)
        for proc in range(self.load + 1):
            seed = stream_seed(self.cfg.seed, "ping", proc)
            for t in generate_traffic(POISSON_USER, rate, seed, count=self.cfg.pings_per_process):
                self.eng.schedule(int(t), self._send, kind=TIMER_FIRE, node="h1")

    def _send(self, ev) -> None:
        self.sent += 1
        sent_at = self.eng.now
        self.eng.after(self.link, lambda e: self._at_switch(0, True, sent_at), kind=PACKET_ARRIVAL, node="s0")

    def _at_switch(self, i: int, to_h2: bool, sent_at: int) -> None:
        fs = self.switches[i]
        ingress = TOWARD_H1 if to_h2 else TOWARD_H2
        out = fs.switch.process(self.frames[to_h2], ingress)
        if not isinstance(out.verdict, pipeline.Forward):
            fs.drops += 1
            return
        service = max(1, round(fs.switch.cost(out) * NS))
        dep = fs.offer(self.eng.now, service)
        if dep is None:
            return
        nxt = i + 1 if out.verdict.egress == TOWARD_H2 else i - 1

        def leave(ev):
            self.eng.after(self.link, lambda e: self._arrive(nxt, to_h2, sent_at), kind=PACKET_ARRIVAL, node=f"s{nxt}")

        self.eng.schedule(dep, leave, kind=SERVICE_COMPLETE, node=f"s{i}")

    def _arrive(self, i: int, to_h2: bool, sent_at: int) -> None:
        if i == len(self.switches):
            # h2 answers at once
            self.eng.after(self.link, lambda e: self._at_switch(i - 1, False, sent_at), kind=PACKET_ARRIVAL, node="h2")
        elif i < 0:
            self.received += 1
            self.rtt_sum += self.eng.now - sent_at
        else:
            self._at_switch(i, to_h2, sent_at)

    def run(self) -> ForwardingRecord:
        self.start()
        self.eng.run_until_idle()
        drops = sum(s.drops for s in self.switches)
        avg = self.rtt_sum / self.received / NS if self.received else math.nan
        return ForwardingRecord(self.mode, len(self.switches), self.load, self.sent, self.received, drops, avg)


def run_forwarding_experiment(mode: str, transit_switches: int, parallel_pings, cfg: ForwardingConfig = None) -> list:
    """One record per load level for ``mode`` over ``transit_switches`` hops."""
    cfg = cfg or ForwardingConfig()
    if mode not in FORWARDING_MODES:
        raise ValueError(f"forwarding mode must be one of {FORWARDING_MODES}, got {mode!r}")
    loads = [parallel_pings] if isinstance(parallel_pings, int) else list(parallel_pings)
    return [_Run(mode, transit_switches, load, cfg).run() for load in loads]


def run_forwarding_grid(cfg: ForwardingConfig = None) -> list:
    cfg = cfg or ForwardingConfig()
    out = []
    for n in cfg.transit_switches:
        for mode in FORWARDING_MODES:
            out.extend(run_forwarding_experiment(mode, n, cfg.loads, cfg))
    return out

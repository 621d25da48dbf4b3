"""Chained intra-CU handovers of one or more UEs along DU1 .. DU(tandem+1).

Hop k moves a UE from DU k (source) to DU k+1 (target).  Every protocol
message travels a path of links, shared M/M/1/B routers and the receiving
node's switch.  The switch verdict decides whether a message reaches the
host, goes to the node's controller, or is lost; routing itself follows
the node graph below.

    UE --rrh link-- radio routers(k) --[DU k switch]-- DU k
    DU k -- midhaul routers(k) -- propagation(k) --[CU switch]-- CU
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import IntEnum
from typing import Callable, Optional

from .. import control, pipeline, qmodel, wire
from ..control import ContextCache, CuController, DuController, MobilityTable, RrcReconfig
from ..wire import ControlTag, EthernetHeader, InstructionTag, Packet, UeContextHeader
from . import metrics
from .config import SMARTHO, TRADITIONAL, ConfigError, ScenarioConfig
from .engine import PACKET_ARRIVAL, SERVICE_COMPLETE, TIMER_FIRE, Engine
from .router import Router
from .streams import exp_draw, stream

log = logging.getLogger("smartho.sim")


class HoMessage(IntEnum):
    MEASUREMENT_REPORT = 1
    UL_RRC_TRANSFER_MR = 2
    UE_CONTEXT_SETUP_REQUEST = 3
    UE_CONTEXT_SETUP_RESPONSE = 4
    UE_CONTEXT_MODIFICATION_REQUEST = 5
    RRC_CONNECTION_RECONFIGURATION = 6
    RRC_RECONFIGURATION_COMPLETE = 7
    UL_RRC_TRANSFER_COMPLETE = 8
    DL_PATH_SWITCH = 9
    UL_DATA_FORWARD = 10
    UE_CONTEXT_RELEASE_COMMAND = 11
    UE_CONTEXT_RELEASE_COMPLETE = 12


# sender and receiver role of each message
ROUTES = {
    1: ("UE", "S_DU"),
    2: ("S_DU", "CU"),
    3: ("CU", "T_DU"),
    4: ("T_DU", "CU"),
    5: ("CU", "S_DU"),
    6: ("S_DU", "UE"),
    7: ("UE", "T_DU"),
    8: ("T_DU", "CU"),
    9: ("CU", "T_DU"),
    10: ("T_DU", "CU"),
    11: ("CU", "S_DU"),
    12: ("S_DU", "CU"),
}

MAX_ATTEMPTS = 64

# port roles on the emulated switches
DU_RADIO = wire.port_bits(1)
DU_MIDHAUL = wire.port_bits(2)
DU_HOST = wire.host_bits(0)
CU_MIDHAUL = wire.port_bits(1)
CU_HOST = wire.host_bits(0)


def du_mac(du: int) -> int:
    return 0x020000000000 | du


def ue_mac(ue: int) -> int:
    return 0x020000010000 | ue


CU_MAC = 0x02000000FF00


def node_name(node: tuple) -> str:
    kind = node[0]
    if kind == "UE":
        return f"UE{node[1]}"
    if kind == "DU":
        return f"DU{node[1]}"
    return "CU"


@dataclass(frozen=True)
class TraceEvent:
    time: int
    node: str
    kind: str  # tx / rx for protocol messages, ctl for controller activity
    message: str
    ue: int
    hop: int
    note: str = ""

    def line(self) -> str:
        base = f"{self.time} {self.node} {self.kind} {self.message} ue={self.ue} hop={self.hop}"
        return f"{base} {self.note}" if self.note else base


@dataclass
class Msg:
    no: int
    ue: int
    hop: int
    packet: Packet
    src: tuple
    dst: tuple
    attempt: int = 0
    pre: bool = False

    @property
    def name(self) -> str:
        return str(self.no)


@dataclass
class _Transit:
    msg: Msg
    path: list
    sent_at: int


@dataclass
class _CuHop:
    genuine: bool = False
    answered: bool = False
    done: bool = False


class HandoverSim:
    def __init__(self, cfg: ScenarioConfig, drop_threshold_us: float = math.inf):
        self.cfg = cfg
        self.drop_threshold = drop_threshold_us
        self.eng = Engine()
        self.seed = cfg.seed
        self.n_dus = cfg.tandem + 1
        self.smartho = cfg.mode == SMARTHO
        topo = cfg.topology
        unit = cfg.unit_us
        bg = cfg.bg_rate_per_us

        self.radio: dict = {}
        self.mid: dict = {}
        self.prop: dict = {}
        self.proc_mean: dict = {}
        for du in range(1, self.n_dus + 1):
            first = du == 1
            radio_params = topo.routers_r_sd if first else topo.routers_r_td
            mid_params = topo.routers_sd_cu if first else topo.routers_td_cu
            self.radio[du] = [self._router(f"du{du}.radio{i}", p, unit, bg) for i, p in enumerate(radio_params)]
            self.mid[du] = [self._router(f"du{du}.mid{i}", p, unit, bg) for i, p in enumerate(mid_params)]
            self.prop[du] = round((topo.t_pd_sdu_cu if first else topo.t_pd_tdu_cu) * unit)
            rates = topo.rates_sdu if first else topo.rates_tdu
            self.proc_mean[("DU", du)] = unit / (rates.mu - rates.lam)
        self.proc_mean[("CU",)] = unit / (topo.rates_cu.mu - topo.rates_cu.lam)

        self.du_switch = {du: pipeline.Switch(self._du_program(du), cfg.cost_model) for du in range(1, self.n_dus + 1)}
        self.cu_switch = pipeline.Switch(self._cu_program(), cfg.cost_model)

        rows = cfg.mobility_rows() if self.smartho else []
        self.auto_delay_us: Optional[int] = None
        if any(r.time_interval == control.AUTO for r in rows):
            self.auto_delay_us = self._auto_delay()
        self.cu_ctrl = CuController(
            MobilityTable(rows),
            ContextCache(cfg.cc_rows),
            auto_delay=lambda row: self.auto_delay_us,
        )
        self.du_ctrl = {du: DuController(du, du_mac(du)) for du in range(1, self.n_dus + 1)}

        self.t_mr: dict = {}
        self.t_rrccr: dict = {}
        self.cu_hops: dict = {}
        self.reservations: dict = {}
        self.trace: list = []
        self.counters = {
            "injected": 0,
            "delivered": 0,
            "lost": 0,
            "retransmissions": 0,
            "switch_drops": 0,
            "wasted_preallocations": 0,
            "preexecuted": 0,
            "replays": 0,
            "fallbacks": 0,
            "duplicate_rrccr": 0,
            "abandoned": 0,
        }

    # --- construction -----------------------------------------------------

    def _router(self, name: str, p: qmodel.RouterParams, unit: float, bg: float) -> Router:
        return Router(name, mu=p.mu / unit, buffer=p.buffer, bg_rate=p.lam / unit + bg, seed=self.seed)

    def _du_program(self, du: int) -> pipeline.SwitchProgram:
        prog = pipeline.load_program("du")
        prog.table_add("etherforward", du_mac(du), "ether_port_forward", {"port": DU_HOST})
        prog.table_add("etherforward", CU_MAC, "ether_port_forward", {"port": DU_MIDHAUL})
        for ue in range(1, self.cfg.ue_count + 1):
            prog.table_add("etherforward", ue_mac(ue), "ether_port_forward", {"port": DU_RADIO})
        return prog

    def _cu_program(self) -> pipeline.SwitchProgram:
        prog = pipeline.load_program("cu")
        prog.table_add("etherforward", CU_MAC, "ether_port_forward", {"port": CU_HOST})
        for du in range(1, self.n_dus + 1):
            prog.table_add("etherforward", du_mac(du), "ether_port_forward", {"port": CU_MIDHAUL})
        # control messages carry no context header: the key reads as 0
        prog.table_add("source_gnb_controller_forward", 0, "prepare_port_forward", {"port": CU_HOST})
        return prog

    def _auto_delay(self) -> int:
        cfg = self.cfg
        topo = cfg.topology
        extra = cfg.bg_rate_per_us * cfg.unit_us

        def loaded(rs):
            return tuple(qmodel.RouterParams(r.lam + extra, r.mu, r.buffer) for r in rs)

        eff = qmodel.PathTopology(
            loaded(topo.routers_r_sd), loaded(topo.routers_r_td), loaded(topo.routers_sd_cu),
            loaded(topo.routers_td_cu), topo.t_pd_sdu_cu, topo.t_pd_tdu_cu, topo.rates_cu,
            topo.rates_sdu, topo.rates_tdu, topo.trigger_time, topo.time_unit,
        )
        t_mr_us = cfg.t_mr_us if cfg.t_mr_us is not None else cfg.ue_access_delay_us + cfg.min_dwell_us + cfg.inter_ho_mean_us
        try:
            d = qmodel.compute_delay(t_mr_us / cfg.unit_us, eff)
        except qmodel.QueueModelError as exc:
            raise ConfigError(f"time_interval 'auto': {exc}") from exc
        return round(d * cfg.unit_us)

    # --- trace ---------------------------------------------------------------

    def _log(self, node: str, kind: str, message: str, ue: int, hop: int, note: str = "") -> None:
        ev = TraceEvent(self.eng.now, node, kind, message, ue, hop, note)
        self.trace.append(ev)
        if log.isEnabledFor(logging.DEBUG):
            log.debug(ev.line())

    # --- transport -------------------------------------------------------------

    def _path(self, src: tuple, dst: tuple) -> list:
        if src[0] == "UE" and dst[0] == "DU":
            du = dst[1]
            return [("link", self.cfg.rrh_du_delay_us), *[("router", r) for r in self.radio[du]],
                    ("switch", self.du_switch[du], DU_RADIO, dst)]
        if src[0] == "DU" and dst[0] == "UE":
            du = src[1]
            return [*[("router", r) for r in reversed(self.radio[du])], ("link", self.cfg.rrh_du_delay_us)]
        if src[0] == "DU" and dst[0] == "CU":
            du = src[1]
            return [*[("router", r) for r in self.mid[du]], ("link", self.prop[du]),
                    ("switch", self.cu_switch, CU_MIDHAUL, dst)]
        if src[0] in ("CU", "CUCTRL") and dst[0] == "DU":
            du = dst[1]
            return [("link", self.prop[du]), *[("router", r) for r in reversed(self.mid[du])],
                    ("switch", self.du_switch[du], DU_MIDHAUL, dst)]
        if src[0] == "CU" and dst[0] == "CUCTRL":
            return [("switch", self.cu_switch, CU_HOST, ("CU",))]
        raise ConfigError(f"no path from {src} to {dst}")

    def send(self, msg: Msg, trace: bool = True) -> None:
        if trace:
            self._log(node_name(msg.src) if msg.src[0] != "CUCTRL" else "CU", "tx", msg.name, msg.ue, msg.hop,
                      "pre" if msg.pre else ("retx" if msg.attempt else ""))
        self.counters["injected"] += 1
        tr = _Transit(msg, self._path(msg.src, msg.dst), self.eng.now)
        self._advance(tr, 0)

    def _advance(self, tr: _Transit, i: int) -> None:
        if i == len(tr.path):
            self.counters["delivered"] += 1
            self._deliver(tr.msg)
            return
        el = tr.path[i]
        kind = el[0]
        nxt: Callable = lambda ev: self._advance(tr, i + 1)
        if kind == "link":
            self.eng.after(el[1], nxt, kind=PACKET_ARRIVAL, node="link")
        elif kind == "router":
            router: Router = el[1]
            m = tr.msg
            rng = stream(self.seed, "svc", router.name, m.ue, m.hop, m.no, m.attempt)
            dep = router.offer(self.eng.now, router.draw_service(rng))
            if dep is None:
                self._lost(tr, f"dropped at {router.name}")
            else:
                self.eng.schedule(max(self.eng.now, round(dep)), nxt, kind=SERVICE_COMPLETE, node=router.name)
        else:
            _, sw, ingress, owner = el
            out = sw.process(wire.serialize(tr.msg.packet), ingress)
            cost = round(sw.cost(out))
            for note in out.digests:
                self.eng.after(cost, lambda ev, note=note: self._cu_digest(note), kind=TIMER_FIRE, node="CU-ctl")
            v = out.verdict
            if isinstance(v, pipeline.Forward):
                self.eng.after(cost, nxt, kind=PACKET_ARRIVAL, node=node_name(owner))
            elif isinstance(v, pipeline.ToController):
                def to_ctl(ev, tr=tr, owner=owner, pkt=v.message):
                    self.counters["delivered"] += 1
                    m = tr.msg
                    if m.no:
                        self._log(node_name(owner), "rx", m.name, m.ue, m.hop, "pre" if m.pre else "")
                    self._controller(owner, tr.msg, pkt)
                self.eng.after(cost, to_ctl, kind=PACKET_ARRIVAL, node=node_name(owner))
            else:
                self.counters["switch_drops"] += 1
                self._lost(tr, f"switch drop: {v.reason}")

    def _lost(self, tr: _Transit, why: str) -> None:
        self.counters["lost"] += 1
        m = tr.msg
        self._log(node_name(m.src) if m.src[0] != "CUCTRL" else "CU", "ctl", "lost", m.ue, m.hop, f"msg={m.no} {why}")
        if m.attempt + 1 >= MAX_ATTEMPTS:
            self.counters["abandoned"] += 1
            return
        again = Msg(m.no, m.ue, m.hop, m.packet, m.src, m.dst, m.attempt + 1, m.pre)
        at = max(self.eng.now, tr.sent_at + self.cfg.rto_us)
        self.counters["retransmissions"] += 1
        self.eng.schedule(at, lambda ev: self.send(again), kind=TIMER_FIRE, node=node_name(m.src))

    def _deliver(self, msg: Msg) -> None:
        self._log(node_name(msg.dst), "rx", msg.name, msg.ue, msg.hop, "pre" if msg.pre else "")
        kind = msg.dst[0]
        if kind == "UE":
            self._ue_rx(msg)
        elif kind == "DU":
            self._du_rx(msg.dst[1], msg)
        else:
            self._cu_rx(msg)

    # --- helpers ------------------------------------------------------------

    def _process(self, node: tuple, msg: Msg, then: Callable, extra: int = 0) -> None:
        d = exp_draw(self.seed, self.proc_mean[node], "proc", node_name(node), msg.ue, msg.hop, msg.no)
        self.eng.after(round(d) + extra, lambda ev: then(), kind=SERVICE_COMPLETE, node=node_name(node))

    def _ctrl_msg(self, no: int, ue: int, hop: int, src: tuple, dst: tuple, payload: bytes = b"") -> Msg:
        pkt = Packet(EthernetHeader(self._mac(dst), self._mac(src), wire.ETH_TYPE_CONTROL), ControlTag(no, ue), payload=payload)
        return Msg(no, ue, hop, pkt, src, dst)

    @staticmethod
    def _mac(node: tuple) -> int:
        if node[0] == "UE":
            return ue_mac(node[1])
        if node[0] == "DU":
            return du_mac(node[1])
        return CU_MAC

    def ue_context(self, ue: int) -> UeContextHeader:
        # per-UE subscription data; deterministic in the UE id
        key = stream(0, "ue-key", ue).getrandbits(64)
        return UeContextHeader(ue, 0, 100_000_000, 1, key)

    def rrc_entry(self, ue: int, hop: int) -> RrcReconfig:
        return RrcReconfig(ue, hop + 1, 0x0100 | (hop & 0xFF), self.ue_context(ue).security_algorithm)

    # --- UE -------------------------------------------------------------------

    def start(self) -> None:
        for ue in range(1, self.cfg.ue_count + 1):
            at = int(stream(self.seed, "start", ue).random() * self.cfg.start_spread_us)
            self.eng.schedule(at, lambda ev, ue=ue: self.send_mr(ue, 1), kind=TIMER_FIRE, node=f"UE{ue}")

    def send_mr(self, ue: int, hop: int) -> None:
        self.t_mr.setdefault((ue, hop), self.eng.now)
        self.send(self._ctrl_msg(1, ue, hop, ("UE", ue), ("DU", hop)))

    def _ue_rx(self, msg: Msg) -> None:
        if msg.no != 6:
            return
        key = (msg.ue, msg.hop)
        if key in self.t_rrccr:
            self.counters["duplicate_rrccr"] += 1
            return
        self.t_rrccr[key] = self.eng.now
        ue, hop = key
        access = self.cfg.ue_access_delay_us
        self.eng.after(access, lambda ev: self.send(self._ctrl_msg(7, ue, hop, ("UE", ue), ("DU", hop + 1))),
                       kind=TIMER_FIRE, node=f"UE{ue}")
        if hop < self.cfg.tandem:
            dwell = self.cfg.min_dwell_us + round(exp_draw(self.seed, self.cfg.inter_ho_mean_us, "dwell", ue, hop))
            self.eng.after(access + dwell, lambda ev: self.send_mr(ue, hop + 1), kind=TIMER_FIRE, node=f"UE{ue}")

    # --- DU host ----------------------------------------------------------------

    def _du_rx(self, du: int, msg: Msg) -> None:
        ue, hop, no = msg.ue, msg.hop, msg.no
        me = ("DU", du)
        cu = ("CU",)
        if no == 1:
            self._process(me, msg, lambda: self.send(self._ctrl_msg(2, ue, hop, me, cu)))
        elif no == 3:
            def prepared():
                self._reserve(du, ue, hop)
                self.send(Msg(4, ue, hop, self._ctrl_msg(4, ue, hop, me, cu).packet, me, cu, pre=msg.pre))
            self._process(me, msg, prepared, extra=self.cfg.prep_fixed_us)
        elif no == 5:
            payload = msg.packet.payload
            self._process(me, msg, lambda: self.send(self._ctrl_msg(6, ue, hop, me, ("UE", ue), payload)))
        elif no == 7:
            self._consume(du, ue)
            self._process(me, msg, lambda: self.send(self._ctrl_msg(8, ue, hop, me, cu)))
        elif no == 9:
            self._process(me, msg, lambda: self.send(self._ctrl_msg(10, ue, hop, me, cu)))
        elif no == 11:
            self._process(me, msg, lambda: self.send(self._ctrl_msg(12, ue, hop, me, cu)))

    def _reserve(self, du: int, ue: int, hop: int) -> None:
        old = self.reservations.pop((du, ue), None)
        if old is not None:
            Engine.cancel(old[1])
        ev = self.eng.after(self.cfg.guard_us, lambda ev: self._guard_expired(du, ue, ev), kind=TIMER_FIRE, node=f"DU{du}")
        self.reservations[(du, ue)] = (hop, ev)

    def _consume(self, du: int, ue: int) -> None:
        res = self.reservations.pop((du, ue), None)
        if res is not None:
            Engine.cancel(res[1])

    def _guard_expired(self, du: int, ue: int, ev) -> None:
        res = self.reservations.get((du, ue))
        if res is None or res[1] is not ev:
            return
        del self.reservations[(du, ue)]
        hop = res[0]
        self.counters["wasted_preallocations"] += 1
        self.du_ctrl[hop].rrct.discard(ue)
        self._log(f"DU{du}", "ctl", "guard_expired", ue, hop)

    # --- CU host ------------------------------------------------------------------

    def _cu_rx(self, msg: Msg) -> None:
        ue, hop, no = msg.ue, msg.hop, msg.no
        me = ("CU",)
        src_du, tgt_du = ("DU", hop), ("DU", hop + 1)
        state = self.cu_hops.setdefault((ue, hop), _CuHop())
        if no == 2:
            def request():
                # a genuine request after a pre-executed round (expired or raced) needs its own answer
                state.genuine = True
                state.answered = False
                self.send(self._ctrl_msg(3, ue, hop, me, tgt_du))
                if self.smartho:
                    self._data_setup(ue, hop)
            self._process(me, msg, request)
        elif no == 4:
            def response():
                if state.genuine:
                    if not state.answered:
                        state.answered = True
                        self.send(self._ctrl_msg(5, ue, hop, me, src_du, self.rrc_entry(ue, hop).pack()))
                elif not state.answered:
                    state.answered = True
                    pkt = control.store_rrc_packet(self.rrc_entry(ue, hop), du_mac(hop), CU_MAC)
                    self.send(Msg(5, ue, hop, pkt, me, src_du, pre=True))
            self._process(me, msg, response)
        elif no == 8:
            self._process(me, msg, lambda: self.send(self._ctrl_msg(9, ue, hop, me, tgt_du)))
        elif no == 10:
            self._process(me, msg, lambda: self.send(self._ctrl_msg(11, ue, hop, me, src_du)))
        elif no == 12:
            def released():
                state.done = True
            self._process(me, msg, released)

    def _data_setup(self, ue: int, hop: int) -> None:
        ctx = self.ue_context(ue)
        pkt = Packet(
            EthernetHeader(CU_MAC, CU_MAC, wire.ETH_TYPE_INSTRUCTION),
            InstructionTag(wire.INST_SET_UE_CONTEXT, ue),
            UeContextHeader(ue, hop, ctx.ue_ambr, ctx.security_algorithm, ctx.security_base_key),
        )
        self._log("CU", "ctl", "set_ue_context", ue, hop)
        self.send(Msg(0, ue, hop, pkt, ("CU",), ("CUCTRL",)), trace=False)

    # --- controllers --------------------------------------------------------------

    def _controller(self, owner: tuple, msg: Msg, pkt: Packet) -> None:
        if owner[0] == "CU":
            if pkt.ue_context is not None and isinstance(pkt.tag, InstructionTag):
                self.cu_ctrl.set_ue_context(pkt.ue_context)
            return
        du = owner[1]
        ctl = self.du_ctrl[du]
        tag = pkt.tag
        if isinstance(tag, ControlTag) and tag.tag_value == 0x01:
            try:
                res = ctl.du_data_updt(pkt, ue_mac(msg.ue))
            except control.NoStoredRrc:
                self._du_rx(du, msg)
                return
            self.counters["replays"] += 1
            self._log(f"DU{du}", "ctl", "replay", msg.ue, msg.hop)
            me = ("DU", du)
            reply = Msg(6, msg.ue, msg.hop, res.packet, me, ("UE", msg.ue), pre=True)
            d = round(exp_draw(self.seed, self.proc_mean[me], "proc", f"DU{du}", msg.ue, msg.hop, 1))
            self.eng.after(d + self.cfg.controller_delay_us, lambda ev: self.send(reply), kind=SERVICE_COMPLETE, node=f"DU{du}")
        elif isinstance(tag, InstructionTag) and tag.tag_value == wire.INST_STORE_RRC:
            ctl.du_data_updt(pkt)
            self._log(f"DU{du}", "ctl", "store_rrc", msg.ue, msg.hop)
        else:
            self._du_rx(du, msg)

    def _cu_digest(self, note: Packet) -> None:
        if not self.smartho:
            return
        ue = note.tag.ue_id
        releasing = note.ue_context.src_gnb_addr
        now = self.eng.now
        try:
            serving = self.cu_ctrl.query_mobility_table(ue, releasing).target_du_id
            trig, factory = self.cu_ctrl.trigger_smartho(ue, serving, now)
        except control.NotFound:
            self.counters["fallbacks"] += 1
            self._log("CU", "ctl", "smartho_init", ue, releasing, "no-mobility-row")
            return
        self._log("CU", "ctl", "smartho_init", ue, serving, f"fire_at={trig.fire_at}")
        self.eng.schedule(trig.fire_at, lambda ev: self._fire(trig, factory), kind=TIMER_FIRE, node="CU-ctl")

    def _fire(self, trig: control.PendingTrigger, factory) -> None:
        if self.cu_ctrl.take(trig.ue_id, trig.fire_at) is None:
            return
        if trig.target_du_id > self.n_dus:
            return
        try:
            pkt = factory(du_mac(trig.target_du_id), CU_MAC)
        except control.NotFound:
            self.counters["fallbacks"] += 1
            self._log("CU", "ctl", "spoof", trig.ue_id, trig.source_du_id, "no-cached-context")
            return
        self.counters["preexecuted"] += 1
        hop = trig.source_du_id
        msg = Msg(3, trig.ue_id, hop, pkt, ("CUCTRL",), ("DU", trig.target_du_id), pre=True)
        self.eng.after(self.cfg.controller_delay_us, lambda ev: self.send(msg), kind=TIMER_FIRE, node="CU-ctl")

    # --- run --------------------------------------------------------------------

    def run(self) -> metrics.MetricsReport:
        self.start()
        end = self.eng.run_until_idle()
        records = []
        last = 0
        for ue in range(1, self.cfg.ue_count + 1):
            for hop in range(1, self.cfg.tandem + 1):
                t_mr = self.t_mr.get((ue, hop))
                t_rx = self.t_rrccr.get((ue, hop))
                try:
                    rec = metrics.measure_ho(ue, hop, t_mr, t_rx, self.drop_threshold)
                    last = max(last, t_rx)
                except metrics.MissingTimestamp:
                    rec = metrics.unfinished(ue, hop, t_mr)
                records.append(rec)
        counters = dict(self.counters)
        counters["in_flight"] = counters["injected"] - counters["delivered"] - counters["lost"]
        counters["events"] = self.eng.executed
        counters["end_time_us"] = end
        return metrics.MetricsReport(
            mode=self.cfg.mode,
            tandem=self.cfg.tandem,
            load=self.cfg.parallel_pings,
            seed=self.cfg.seed,
            config_hash=self.cfg.config_hash(),
            drop_threshold_us=self.drop_threshold,
            records=records,
            wasted_preallocations=self.counters["wasted_preallocations"],
            total_time_us=last,
            counters=counters,
            trace=self.trace,
        )

    def routers(self) -> list:
        out = []
        for du in range(1, self.n_dus + 1):
            out.extend(self.radio[du])
            out.extend(self.mid[du])
        return out


_calibration: dict = {}


def calibrate_drop_threshold(cfg: ScenarioConfig, factor: float = 5.0) -> float:
    """``factor`` times the unloaded single-HO time of this topology and seed."""
    base = cfg.with_(mode=TRADITIONAL, tandem=1, ue_count=1, parallel_pings=0, drop_threshold_us=None, mt_rows="chain")
    key = (base.config_hash(), factor)
    if key not in _calibration:
        rep = HandoverSim(base).run()
        times = [r.ho_time for r in rep.records if r.ho_time is not None]
        if not times:
            raise ConfigError("calibration handover did not complete")
        _calibration[key] = factor * times[0]
    return _calibration[key]


def run_scenario(cfg: ScenarioConfig) -> metrics.MetricsReport:
    threshold = cfg.drop_threshold_us
    if threshold is None:
        threshold = calibrate_drop_threshold(cfg)
    sim = HandoverSim(cfg, threshold)
    return sim.run()

"""Protocol-independent switch emulation: parser FSM, exact-match tables,
action primitives and deparser.

Programs are data (see ``data/programs/*.json``); only the apply-block
control flow of each program kind (cu, du, ip, tag) is code.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Callable, Optional, Union

from . import wire
from .wire import (
    ControlTag,
    EthernetHeader,
    ForwardTag,
    InstructionTag,
    SmarthoHeader,
    UeContextHeader,
)


class PipelineError(Exception):
    pass


class MalformedProgram(PipelineError):
    pass


class DuplicateKey(PipelineError):
    pass


class UnknownAction(PipelineError):
    pass


class DeparseError(PipelineError):
    pass


# --- the IPv4-like encapsulation used only by the IP baseline -------------

_IPV4 = struct.Struct("!BBHHHBBHII")
IPV4_LEN = 20


@dataclass(frozen=True)
class Ipv4Header:
    src: int
    dst: int
    ttl: int = 64
    protocol: int = 1
    total_length: int = IPV4_LEN

    def pack(self) -> bytes:
        return _IPV4.pack(0x45, 0, self.total_length, 0, 0, self.ttl, self.protocol, 0, self.src, self.dst)

    @classmethod
    def unpack(cls, data: bytes, offset: int = 0) -> "Ipv4Header":
        if len(data) - offset < IPV4_LEN:
            raise wire.Truncated("missing IPv4 header")
        _, _, total, _, _, ttl, proto, _, src, dst = _IPV4.unpack_from(data, offset)
        return cls(src=src, dst=dst, ttl=ttl, protocol=proto, total_length=total)


def ip_address(text: str) -> int:
    a, b, c, d = (int(x) for x in text.split("."))
    return (a << 24) | (b << 16) | (c << 8) | d


# extract kind -> (slot in the parsed header map, header class)
EXTRACTORS = {
    "ethernet": ("ethernet", EthernetHeader),
    "tag.t1": ("tag", ForwardTag),
    "tag.t2": ("tag", ControlTag),
    "tag.t3": ("tag", InstructionTag),
    "ue_context": ("ue_context", UeContextHeader),
    "smartho": ("smartho", SmarthoHeader),
    "ipv4": ("ipv4", Ipv4Header),
}

# header-slot sequences a parser may produce
LEGAL_STACKS = {
    ("ethernet",),
    ("ethernet", "tag"),
    ("ethernet", "tag", "ue_context"),
    ("ethernet", "smartho"),
    ("ethernet", "ipv4"),
}

ACCEPT = "accept"
REJECT = "reject"


# --- parser ----------------------------------------------------------------

def _parse_int(v) -> int:
    return int(v, 0) if isinstance(v, str) else int(v)


@dataclass(frozen=True)
class ParserState:
    name: str
    extract: Optional[str] = None
    select: Optional[str] = None
    cases: tuple = ()  # ((lo, hi, next_state), ...) in declaration order
    default: str = ACCEPT

    def next_state(self, value: Optional[int]) -> Optional[str]:
        if self.select is None:
            return self.default
        for lo, hi, nxt in self.cases:
            if value is not None and lo <= value <= hi:
                return nxt
        return self.default

    @property
    def targets(self) -> set:
        return {nxt for _, _, nxt in self.cases} | ({self.default} if self.default else set())


@dataclass(frozen=True)
class ParserProgram:
    states: dict
    start: str = "start"

    def __post_init__(self):
        self.validate()

    @classmethod
    def from_dict(cls, d: dict) -> "ParserProgram":
        states = {}
        for name, sd in d["states"].items():
            cases = []
            for k, nxt in sd.get("cases", {}).items():
                if isinstance(k, str) and "-" in k:
                    lo, hi = (_parse_int(x) for x in k.split("-"))
                else:
                    lo = hi = _parse_int(k)
                cases.append((lo, hi, nxt))
            states[name] = ParserState(
                name=name,
                extract=sd.get("extract"),
                select=sd.get("select"),
                cases=tuple(cases),
                default=sd.get("default", ACCEPT),
            )
        return cls(states=states, start=d.get("start", "start"))

    def to_dict(self) -> dict:
        out = {}
        for name, st in self.states.items():
            sd = {}
            if st.extract:
                sd["extract"] = st.extract
            if st.select:
                sd["select"] = st.select
                sd["cases"] = {
                    (f"{lo:#06x}" if lo == hi else f"{lo:#06x}-{hi:#06x}"): nxt for lo, hi, nxt in st.cases
                }
            sd["default"] = st.default
            out[name] = sd
        return {"start": self.start, "states": out}

    def validate(self) -> None:
        if self.start not in self.states:
            raise MalformedProgram(f"start state {self.start!r} not defined")
        for st in self.states.values():
            if st.extract is not None and st.extract not in EXTRACTORS:
                raise MalformedProgram(f"state {st.name!r} extracts unknown header {st.extract!r}")
            for t in st.targets:
                if t not in (ACCEPT, REJECT) and t not in self.states:
                    raise MalformedProgram(f"state {st.name!r} transitions to undefined {t!r}")
            if st.select is None and st.cases:
                raise MalformedProgram(f"state {st.name!r} has cases but no select field")

        # every path from start must be acyclic and extract a legal stack
        def walk(name: str, stack: tuple, seen: frozenset):
            if name in seen:
                raise MalformedProgram(f"parser cycle through {name!r}")
            st = self.states[name]
            if st.extract:
                stack = stack + (EXTRACTORS[st.extract][0],)
                if not any(legal[: len(stack)] == stack for legal in LEGAL_STACKS):
                    raise MalformedProgram(f"illegal header order {stack} at state {name!r}")
            if st.select is not None:
                hdr = st.select.split(".", 1)[0]
                if hdr not in stack:
                    raise MalformedProgram(f"state {name!r} selects on {st.select!r} before extracting it")
            for t in st.targets:
                if t == ACCEPT:
                    if stack not in LEGAL_STACKS:
                        raise MalformedProgram(f"accepting incomplete stack {stack}")
                elif t != REJECT:
                    walk(t, stack, seen | {name})

        walk(self.start, (), frozenset())


@dataclass(frozen=True)
class Reject:
    reason: str

    def __bool__(self):
        return False


@dataclass
class ParsedPacket:
    headers: dict
    payload: bytes
    parsed_bytes: int
    states: tuple = ()

    def valid(self, name: str) -> bool:
        return name in self.headers

    def get(self, path: str) -> Optional[int]:
        """Field value, or None when the header is not valid."""
        if path.startswith("meta."):
            raise PipelineError("metadata fields are read through SumeMetadata")
        hdr, _, fld = path.partition(".")
        h = self.headers.get(hdr)
        if h is None:
            return None
        if not fld:
            return h
        return getattr(h, fld)

    def set_field(self, path: str, value: int) -> None:
        hdr, _, fld = path.partition(".")
        self.headers[hdr] = replace(self.headers[hdr], **{fld: value})

    @property
    def tag(self):
        return self.headers.get("tag")

    @property
    def ue_context(self) -> Optional[UeContextHeader]:
        return self.headers.get("ue_context")

    @property
    def smartho(self) -> Optional[SmarthoHeader]:
        return self.headers.get("smartho")

    def copy(self) -> "ParsedPacket":
        return ParsedPacket(dict(self.headers), self.payload, self.parsed_bytes, self.states)

    def deparse(self) -> bytes:
        return b"".join(h.pack() for h in self.headers.values()) + self.payload

    def to_packet(self, meta: Optional[wire.PacketMeta] = None) -> wire.Packet:
        extra = b""
        if "ipv4" in self.headers:
            extra = self.headers["ipv4"].pack()
        ext = self.headers.get("ue_context") or self.headers.get("smartho")
        return wire.Packet(
            self.headers["ethernet"],
            self.headers.get("tag"),
            ext,
            extra + self.payload,
            meta or wire.PacketMeta(),
        )


def run_parser(program: ParserProgram, data: bytes) -> Union[ParsedPacket, Reject]:
    data = bytes(data)
    headers: dict = {}
    offset = 0
    visited = []
    name = program.start
    while name not in (ACCEPT, REJECT):
        st = program.states[name]
        visited.append(name)
        if st.extract:
            slot, cls = EXTRACTORS[st.extract]
            try:
                h = cls.unpack(data, offset)
            except wire.Truncated as exc:
                return Reject(f"{name}: {exc}")
            except ValueError as exc:
                return Reject(f"{name}: {exc}")
            headers[slot] = h
            offset += len(h.pack())
        value = None
        if st.select is not None:
            hdr, _, fld = st.select.partition(".")
            value = getattr(headers[hdr], fld)
        nxt = st.next_state(value)
        if nxt is None:
            return Reject(f"{name}: no transition for {value!r}")
        name = nxt
    if name == REJECT:
        return Reject(f"explicit reject after {visited[-1] if visited else 'start'}")
    return ParsedPacket(headers, data[offset:], offset, tuple(visited))


# --- tables ----------------------------------------------------------------

@dataclass
class MatchActionTable:
    name: str
    key_field: Union[str, tuple]
    actions: frozenset
    default_action: str = "operation_drop"
    default_params: dict = field(default_factory=dict)
    entries: dict = field(default_factory=dict)

    def __post_init__(self):
        self.actions = frozenset(self.actions) | {self.default_action}
        for a in self.actions:
            if a not in ACTIONS:
                raise UnknownAction(f"table {self.name!r}: unknown action {a!r}")

    def add(self, key, action: str, params: Optional[dict] = None) -> "MatchActionTable":
        if action not in self.actions:
            raise UnknownAction(f"table {self.name!r} does not allow action {action!r}")
        key = self._norm_key(key)
        if key in self.entries:
            raise DuplicateKey(f"table {self.name!r} already has key {key!r}")
        self.entries[key] = (action, dict(params or {}))
        return self

    def lookup(self, key) -> tuple:
        """(action, params, hit) for ``key``; a miss yields the default action."""
        if key is not None:
            hit = self.entries.get(self._norm_key(key))
            if hit is not None:
                return hit[0], hit[1], True
        return self.default_action, self.default_params, False

    def _norm_key(self, key):
        if isinstance(self.key_field, tuple):
            return tuple(_parse_int(k) for k in key)
        return _parse_int(key)

    @classmethod
    def from_dict(cls, d: dict) -> "MatchActionTable":
        key = d["key"]
        t = cls(
            name=d["name"],
            key_field=tuple(key) if isinstance(key, list) else key,
            actions=frozenset(d.get("actions", ())),
            default_action=d.get("default_action", "operation_drop"),
            default_params=_params(d.get("default_params", {})),
        )
        for e in d.get("entries", ()):
            t.add(e["key"], e["action"], _params(e.get("params", {})))
        return t

    def to_dict(self) -> dict:
        def fmt(k):
            return list(k) if isinstance(k, tuple) else k

        return {
            "name": self.name,
            "key": list(self.key_field) if isinstance(self.key_field, tuple) else self.key_field,
            "actions": sorted(self.actions),
            "default_action": self.default_action,
            "default_params": self.default_params,
            "entries": [{"key": fmt(k), "action": a, "params": p} for k, (a, p) in self.entries.items()],
        }


def _params(p: dict) -> dict:
    return {k: _parse_int(v) for k, v in p.items()}


# --- metadata, costs, outcomes ---------------------------------------------

@dataclass
class SumeMetadata:
    src_port: int
    dst_port: Optional[int] = None


@dataclass(frozen=True)
class CostModel:
    per_byte_parse_cost: float = 0.05
    per_table_lookup_cost: float = 0.5
    per_action_cost: float = 0.2

    def __post_init__(self):
        for k, v in vars(self).items():
            if v < 0:
                raise ValueError(f"{k} must be >= 0")

    def cost(self, parsed_bytes: int, lookups: int, actions: int) -> float:
        return (
            parsed_bytes * self.per_byte_parse_cost
            + lookups * self.per_table_lookup_cost
            + actions * self.per_action_cost
        )

    @classmethod
    def from_dict(cls, d: Optional[dict]) -> "CostModel":
        return cls(**(d or {}))


@dataclass(frozen=True)
class Forward:
    egress: int


@dataclass(frozen=True)
class Drop:
    reason: str = ""


@dataclass(frozen=True)
class ToController:
    message: wire.Packet


Verdict = Union[Forward, Drop, ToController]


@dataclass
class PipelineOutcome:
    verdict: Verdict
    modified: Optional[ParsedPacket]
    parsed_bytes: int = 0
    lookups: int = 0
    actions: int = 0
    digests: tuple = ()
    branch: str = ""

    def processing_time(self, cost_model: CostModel) -> float:
        return cost_model.cost(self.parsed_bytes, self.lookups, self.actions)


class _Ctx:
    __slots__ = ("pkt", "meta", "controller_port", "drop", "to_controller", "lookups", "actions", "digests")

    def __init__(self, pkt: ParsedPacket, meta: SumeMetadata, controller_port: Optional[int]):
        self.pkt = pkt
        self.meta = meta
        self.controller_port = controller_port
        self.drop = False
        self.to_controller = False
        self.lookups = 0
        self.actions = 0
        self.digests: list = []

    def read(self, path: str):
        if path.startswith("meta."):
            return getattr(self.meta, path[5:])
        hdr, _, fld = path.partition(".")
        h = self.pkt.headers.get(hdr)
        if h is None:
            # reading a field of an invalid header yields zero, as in bmv2
            return 0
        return getattr(h, fld)

    def apply(self, table: MatchActionTable) -> bool:
        if isinstance(table.key_field, tuple):
            key = tuple(self.read(k) for k in table.key_field)
        else:
            key = self.read(table.key_field)
        self.lookups += 1
        action, params, hit = table.lookup(key)
        self.call(action, params)
        return hit

    def call(self, action: str, params: Optional[dict] = None) -> None:
        fn = ACTIONS.get(action)
        if fn is None:
            raise UnknownAction(action)
        if action != "NoAction":
            self.actions += 1
        fn(self, params or {})


def _controller_port(ctx: _Ctx) -> int:
    if ctx.controller_port is not None:
        return ctx.controller_port
    return wire.to_host(ctx.meta.src_port)


def _a_noop(ctx, p):
    pass


def _a_drop(ctx, p):
    ctx.drop = True


def _a_port_forward(ctx, p):
    ctx.meta.dst_port = p["port"]


def _a_to_controller(ctx, p):
    ctx.to_controller = True
    ctx.meta.dst_port = _controller_port(ctx)


def _a_smartho_init(ctx, p):
    # notify the controller; the triggering packet keeps going
    tag = ctx.pkt.tag
    src_du = ctx.pkt.headers["ethernet"].src_mac & 0xFFFF
    eth = ctx.pkt.headers["ethernet"]
    note = wire.Packet(
        EthernetHeader(eth.dst_mac, eth.src_mac, wire.ETH_TYPE_INSTRUCTION),
        InstructionTag(wire.INST_MOBILITY, tag.ue_id),
        UeContextHeader(tag.ue_id, src_du, 0, 0, 0),
    )
    ctx.digests.append(note)


def _a_smartho_rewrite(ctx, p):
    hdr = ctx.pkt.smartho
    nxt = p.get("next_ctrl_info", hdr.ctrl_info + 1)
    ctx.pkt.set_field("smartho.ctrl_info", nxt)
    ctx.pkt.set_field("smartho.frwd_tag_prt", p["port"])


ACTIONS: dict = {
    "NoAction": _a_noop,
    "operation_drop": _a_drop,
    "ether_port_forward": _a_port_forward,
    "prepare_port_forward": _a_port_forward,
    "port_forward": _a_port_forward,
    "ipv4_forward": _a_port_forward,
    "tag_port_forward": _a_port_forward,
    "cu_controller_forward": _a_to_controller,
    "du_controller_forward": _a_to_controller,
    "smartho_init": _a_smartho_init,
    "smartho_rewrite": _a_smartho_rewrite,
}


def _finish(ctx: _Ctx, branch: str) -> PipelineOutcome:
    pkt = ctx.pkt
    if ctx.to_controller:
        verdict: Verdict = ToController(pkt.to_packet(wire.PacketMeta(ctx.meta.src_port, ctx.meta.dst_port)))
    elif ctx.drop:
        verdict = Drop(f"{branch}: drop action")
    elif ctx.meta.dst_port is None:
        verdict = Drop(f"{branch}: no egress port set")
    else:
        verdict = Forward(ctx.meta.dst_port)
    return PipelineOutcome(
        verdict=verdict,
        modified=pkt,
        parsed_bytes=pkt.parsed_bytes,
        lookups=ctx.lookups,
        actions=ctx.actions,
        digests=tuple(ctx.digests),
        branch=branch,
    )


def _table(tables: dict, name: str) -> Optional[MatchActionTable]:
    return tables.get(name)


# --- control blocks ----------------------------------------------------------

def cu_pipeline(pkt: ParsedPacket, meta: SumeMetadata, tables: dict, controller_port: Optional[int] = None) -> PipelineOutcome:
    """CU ingress: context-bearing tagged packets go to the controller, other
    tagged packets through source_gnb_controller_forward, untagged ones
    through etherforward.  ControlTag values listed in control_intercept
    additionally raise a digest to the controller."""
    ctx = _Ctx(pkt.copy(), meta, controller_port)
    if ctx.pkt.valid("tag"):
        if ctx.pkt.valid("ue_context"):
            ctx.call("cu_controller_forward")
            branch = "context"
        else:
            ctx.apply(tables["source_gnb_controller_forward"])
            branch = "tag"
            intercept = _table(tables, "control_intercept")
            if intercept is not None and isinstance(ctx.pkt.tag, ControlTag):
                ctx.apply(intercept)
    else:
        ctx.apply(tables["etherforward"])
        branch = "untagged"
    return _finish(ctx, branch)


RRC_INTERCEPT_TAGS = frozenset({wire.INST_STORE_RRC, 0x01})


def du_pipeline(pkt: ParsedPacket, meta: SumeMetadata, tables: dict, controller_port: Optional[int] = None) -> PipelineOutcome:
    """DU ingress.

    Testbed Smartho frames: egress from frwd_tag_prt, then the static
    lookup keyed on (ctrl_info, src_port) rewrites ctrl_info/frwd_tag_prt.
    Context-bearing instructions and tags 0x0f (store RRC) / 0x01 (MR) go
    to the DU controller.  Everything else is forwarded on dst_mac.
    """
    ctx = _Ctx(pkt.copy(), meta, controller_port)
    p = ctx.pkt
    if p.valid("smartho"):
        ctx.meta.dst_port = p.smartho.frwd_tag_prt
        ctx.actions += 1
        ctx.apply(tables["smartho_lookup"])
        return _finish(ctx, "smartho")
    tag = p.tag
    if isinstance(tag, InstructionTag) and p.valid("ue_context"):
        ctx.call("du_controller_forward")
        return _finish(ctx, "context")
    if isinstance(tag, (InstructionTag, ControlTag)) and tag.tag_value in RRC_INTERCEPT_TAGS:
        ctx.call("du_controller_forward")
        return _finish(ctx, "rrc")
    ctx.apply(tables["etherforward"])
    return _finish(ctx, "forward")


def ip_baseline_pipeline(pkt: ParsedPacket, meta: SumeMetadata, tables: dict, controller_port: Optional[int] = None) -> PipelineOutcome:
    ctx = _Ctx(pkt.copy(), meta, controller_port)
    if ctx.pkt.valid("ipv4"):
        ctx.apply(tables["ipv4_lpm"])
        branch = "ipv4"
    else:
        ctx.call("operation_drop")
        branch = "non-ip"
    return _finish(ctx, branch)


def tag_pipeline(pkt: ParsedPacket, meta: SumeMetadata, tables: dict, controller_port: Optional[int] = None) -> PipelineOutcome:
    ctx = _Ctx(pkt.copy(), meta, controller_port)
    if isinstance(ctx.pkt.tag, ForwardTag):
        ctx.apply(tables["tag_forward"])
        branch = "tag"
    else:
        ctx.call("operation_drop")
        branch = "untagged"
    return _finish(ctx, branch)


CONTROLS: dict = {
    "cu": cu_pipeline,
    "du": du_pipeline,
    "ip": ip_baseline_pipeline,
    "tag": tag_pipeline,
}


def deparse(outcome: PipelineOutcome) -> bytes:
    """Bytes of the (possibly modified) packet; only for Forward/ToController."""
    if isinstance(outcome.verdict, Drop) or outcome.modified is None:
        raise DeparseError(f"cannot deparse a dropped packet ({outcome.verdict})")
    pkt = outcome.modified
    if "ipv4" in pkt.headers:
        return pkt.deparse()
    return wire.serialize(pkt.to_packet())


# --- whole switch ------------------------------------------------------------

@dataclass
class SwitchProgram:
    name: str
    control: str
    parser: ParserProgram
    tables: dict
    controller_port: Optional[int] = None

    def __post_init__(self):
        if self.control not in CONTROLS:
            raise MalformedProgram(f"unknown control block {self.control!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "SwitchProgram":
        tables = {}
        for td in d.get("tables", ()):
            t = MatchActionTable.from_dict(td)
            tables[t.name] = t
        cp = d.get("controller_port")
        return cls(
            name=d.get("name", d["control"]),
            control=d["control"],
            parser=ParserProgram.from_dict(d["parser"]),
            tables=tables,
            controller_port=None if cp is None else _parse_int(cp),
        )

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "control": self.control,
            "parser": self.parser.to_dict(),
            "tables": [t.to_dict() for t in self.tables.values()],
            "controller_port": self.controller_port,
        }

    def table_add(self, table: str, key, action: str, params: Optional[dict] = None) -> None:
        self.tables[table].add(key, action, params)


def data_path(*parts: str):
    """Traversable for a bundled data file."""
    node = resources.files("smartho").joinpath("data")
    for part in parts:
        node = node.joinpath(part)
    return node


def load_program(name_or_path: str) -> SwitchProgram:
    """Load a bundled program by name (``cu``, ``du``, ``ip``, ``tag``) or a JSON path."""
    if name_or_path.endswith(".json"):
        with open(name_or_path) as fh:
            return SwitchProgram.from_dict(json.load(fh))
    text = data_path("programs", f"{name_or_path}.json").read_text()
    return SwitchProgram.from_dict(json.loads(text))


class Switch:
    """A program instance with its own tables; processes raw frames.

    Outcomes are memoised on (frame, ingress port): a pass is a pure
    function of bytes, metadata and the (frozen during a run) tables.
    """

    def __init__(self, program: SwitchProgram, cost_model: Optional[CostModel] = None, memo: bool = True):
        self.program = program
        self.cost_model = cost_model or CostModel()
        self._control: Callable = CONTROLS[program.control]
        self._memo: Optional[dict] = {} if memo else None
        self.passes = 0
        self.rejects = 0

    def process(self, data: bytes, ingress_port: int) -> PipelineOutcome:
        self.passes += 1
        key = (bytes(data), ingress_port)
        if self._memo is not None:
            hit = self._memo.get(key)
            if hit is not None:
                if isinstance(hit.verdict, Drop) and hit.branch == "parser":
                    self.rejects += 1
                return hit
        parsed = run_parser(self.program.parser, data)
        if isinstance(parsed, Reject):
            self.rejects += 1
            out = PipelineOutcome(Drop(f"parser reject: {parsed.reason}"), None, branch="parser")
        else:
            meta = SumeMetadata(src_port=ingress_port)
            out = self._control(parsed, meta, self.program.tables, self.program.controller_port)
        if self._memo is not None:
            self._memo[key] = out
        return out

    def cost(self, outcome: PipelineOutcome) -> float:
        return outcome.processing_time(self.cost_model)

"""CU and DU controllers: mobility table, context cache, stored RRC
reconfigurations, and the packets they inject into the data plane."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Callable, Optional, Union

from . import wire
from .wire import ControlTag, EthernetHeader, InstructionTag, Packet, UeContextHeader


class ControlError(Exception):
    pass


class NotFound(ControlError, LookupError):
    pass


class NoStoredRrc(ControlError, LookupError):
    pass


class DuplicateRow(ControlError):
    pass


AUTO = "auto"


@dataclass(frozen=True)
class MobilityEntry:
    ue_id: int
    source_du_id: int
    target_du_id: int
    time_interval: Union[int, str] = 0  # microseconds, or "auto"

    def __post_init__(self):
        if self.time_interval != AUTO:
            if not isinstance(self.time_interval, int) or self.time_interval < 0:
                raise ValueError(f"time_interval must be a non-negative integer or 'auto', got {self.time_interval!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "MobilityEntry":
        ti = d.get("time_interval", 0)
        return cls(int(d["ue_id"]), int(d["source_du_id"]), int(d["target_du_id"]), ti if ti == AUTO else int(ti))

    def to_dict(self) -> dict:
        return {
            "ue_id": self.ue_id,
            "source_du_id": self.source_du_id,
            "target_du_id": self.target_du_id,
            "time_interval": self.time_interval,
        }


class MobilityTable:
    """Fixed-path UEs keyed on (ue_id, source_du_id)."""

    def __init__(self, rows=()):
        self._rows: dict = {}
        for r in rows:
            self.add(r)

    def add(self, row: MobilityEntry) -> None:
        key = (row.ue_id, row.source_du_id)
        if key in self._rows:
            raise DuplicateRow(f"mobility table already has ue {row.ue_id} at DU {row.source_du_id}")
        self._rows[key] = row

    def query(self, ue_id: int, source_du_id: int) -> MobilityEntry:
        try:
            return self._rows[(ue_id, source_du_id)]
        except KeyError:
            raise NotFound(f"no mobility row for ue {ue_id} leaving DU {source_du_id}") from None

    def __contains__(self, key) -> bool:
        return key in self._rows

    def __len__(self) -> int:
        return len(self._rows)

    def __iter__(self):
        return iter(self._rows.values())

    def ues(self) -> set:
        return {ue for ue, _ in self._rows}


@dataclass(frozen=True)
class CachedContext:
    ue_id: int
    ue_ambr: int
    security_algorithm: int
    security_base_key: int

    @classmethod
    def from_header(cls, h: UeContextHeader) -> "CachedContext":
        return cls(h.ue_id, h.ue_ambr, h.security_algorithm, h.security_base_key)

    @classmethod
    def from_dict(cls, d: dict) -> "CachedContext":
        return cls(int(d["ue_id"]), int(d["ue_ambr"]), int(d["security_algorithm"]), int(d["security_base_key"]))


class ContextCache:
    def __init__(self, rows=()):
        self._rows: dict = {}
        for r in rows:
            self._rows[r.ue_id] = r

    def upsert(self, ctx: CachedContext) -> None:
        self._rows[ctx.ue_id] = ctx

    def get(self, ue_id: int) -> CachedContext:
        try:
            return self._rows[ue_id]
        except KeyError:
            raise NotFound(f"no cached context for ue {ue_id}") from None

    def __contains__(self, ue_id) -> bool:
        return ue_id in self._rows

    def __len__(self) -> int:
        return len(self._rows)


_RRC = struct.Struct("!HHHB")
RRC_PAYLOAD_LEN = _RRC.size


@dataclass(frozen=True)
class RrcReconfig:
    """Body of an RRC reconfiguration, as carried after the tag."""

    ue_id: int
    target_du_id: int
    bearer_info: int
    security_algorithm: int

    def pack(self) -> bytes:
        return _RRC.pack(self.ue_id, self.target_du_id, self.bearer_info, self.security_algorithm)

    @classmethod
    def unpack(cls, data: bytes) -> "RrcReconfig":
        if len(data) < RRC_PAYLOAD_LEN:
            raise wire.Truncated(f"RRC reconfiguration needs {RRC_PAYLOAD_LEN} bytes, have {len(data)}")
        return cls(*_RRC.unpack_from(data))


class RrcTable:
    def __init__(self):
        self._rows: dict = {}

    def store(self, entry: RrcReconfig) -> None:
        self._rows[entry.ue_id] = entry

    def get(self, ue_id: int) -> RrcReconfig:
        try:
            return self._rows[ue_id]
        except KeyError:
            raise NoStoredRrc(f"no stored RRC reconfiguration for ue {ue_id}") from None

    def discard(self, ue_id: int) -> Optional[RrcReconfig]:
        return self._rows.pop(ue_id, None)

    def __contains__(self, ue_id) -> bool:
        return ue_id in self._rows

    def __len__(self) -> int:
        return len(self._rows)


@dataclass(frozen=True)
class PendingTrigger:
    ue_id: int
    source_du_id: int
    target_du_id: int
    fire_at: int


class CuController:
    """Watches releases and fires spoofed context-setup requests at the
    next target ahead of the UE's measurement report."""

    def __init__(self, mt: Optional[MobilityTable] = None, cc: Optional[ContextCache] = None,
                 auto_delay: Optional[Callable[[MobilityEntry], int]] = None):
        self.mt = mt or MobilityTable()
        self.cc = cc or ContextCache()
        self.pending: dict = {}
        self._auto_delay = auto_delay

    def set_ue_context(self, hdr: UeContextHeader) -> CachedContext:
        ctx = CachedContext.from_header(hdr)
        self.cc.upsert(ctx)
        return ctx

    def query_mobility_table(self, ue_id: int, source_du_id: int) -> MobilityEntry:
        return self.mt.query(ue_id, source_du_id)

    def interval(self, row: MobilityEntry) -> int:
        if row.time_interval == AUTO:
            if self._auto_delay is None:
                raise ControlError("time_interval 'auto' needs a delay model")
            return int(self._auto_delay(row))
        return row.time_interval

    def trigger_smartho(self, ue_id: int, source_du_id: int, now: int) -> tuple:
        """Schedule the spoofed request; a newer trigger replaces an older one.

        Returns the pending trigger and a factory ``(dst_mac, src_mac) -> Packet``.
        """
        row = self.query_mobility_table(ue_id, source_du_id)
        trig = PendingTrigger(ue_id, source_du_id, row.target_du_id, now + self.interval(row))
        self.pending[ue_id] = trig

        def factory(dst_mac: int, src_mac: int) -> Packet:
            return self.spoofed_request(trig, dst_mac, src_mac)

        return trig, factory

    def spoofed_request(self, trig: PendingTrigger, dst_mac: int, src_mac: int) -> Packet:
        ctx = self.cc.get(trig.ue_id)
        return Packet(
            EthernetHeader(dst_mac, src_mac, wire.ETH_TYPE_INSTRUCTION),
            InstructionTag(wire.INST_MOBILITY, trig.ue_id),
            UeContextHeader(trig.ue_id, trig.source_du_id, ctx.ue_ambr, ctx.security_algorithm, ctx.security_base_key),
        )

    def take(self, ue_id: int, fire_at: int) -> Optional[PendingTrigger]:
        """Pop the pending trigger if it is still the one scheduled for ``fire_at``."""
        trig = self.pending.get(ue_id)
        if trig is None or trig.fire_at != fire_at:
            return None
        del self.pending[ue_id]
        return trig


@dataclass(frozen=True)
class StoreAck:
    entry: RrcReconfig


@dataclass(frozen=True)
class ReplayPacket:
    packet: Packet
    entry: RrcReconfig


class DuController:
    def __init__(self, du_id: int, mac: int):
        self.du_id = du_id
        self.mac = mac
        self.rrct = RrcTable()
        self.replays = 0

    def du_data_updt(self, packet: Packet, ue_mac: int = 0) -> Union[StoreAck, ReplayPacket]:
        tag = packet.tag
        if isinstance(tag, InstructionTag) and tag.tag_value == wire.INST_STORE_RRC:
            entry = RrcReconfig.unpack(packet.payload)
            self.rrct.store(entry)
            return StoreAck(entry)
        if isinstance(tag, ControlTag) and tag.tag_value == 0x01:
            entry = self.rrct.get(tag.ue_id)
            self.rrct.discard(tag.ue_id)
            self.replays += 1
            return ReplayPacket(rrc_reconfig_packet(entry, ue_mac, self.mac), entry)
        raise ControlError(f"DU controller cannot handle {tag!r}")


def rrc_reconfig_packet(entry: RrcReconfig, dst_mac: int, src_mac: int) -> Packet:
    return Packet(EthernetHeader(dst_mac, src_mac, wire.ETH_TYPE_CONTROL), ControlTag(0x06, entry.ue_id), payload=entry.pack())


def store_rrc_packet(entry: RrcReconfig, dst_mac: int, src_mac: int) -> Packet:
    return Packet(
        EthernetHeader(dst_mac, src_mac, wire.ETH_TYPE_INSTRUCTION),
        InstructionTag(wire.INST_STORE_RRC, entry.ue_id),
        payload=entry.pack(),
    )

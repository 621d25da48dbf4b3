"""Header formats and their byte encodings.

Every multi-byte field is big-endian.  The ether_type selects what follows
the Ethernet header:

    0x0101          InstructionTag, then a UeContextHeader for the
                    context-carrying instruction values (0x01, 0x02, 0x03)
    0x0102          ControlTag
    0x0103          SmarthoHeader (testbed control message, no tag)
    0x0104..0x01FF  ForwardTag
    anything else   no tag; the rest of the frame is payload
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from typing import Optional, Union

ETH_TYPE_INSTRUCTION = 0x0101
ETH_TYPE_CONTROL = 0x0102
SMARTHO_TYPE = 0x0103
ETH_TYPE_FORWARD = 0x0104
ETH_TYPE_IPV4 = 0x0800
EXPERIMENTAL_MIN = 0x0101
EXPERIMENTAL_MAX = 0x01FF

# instruction tag values
INST_UE_CONTEXT = 0x01
INST_MOBILITY = 0x02
INST_SET_UE_CONTEXT = 0x03
INST_STORE_RRC = 0x0F
INSTRUCTION_VALUES = frozenset({INST_UE_CONTEXT, INST_MOBILITY, INST_SET_UE_CONTEXT, INST_STORE_RRC})
CONTEXT_CARRYING = frozenset({INST_UE_CONTEXT, INST_MOBILITY, INST_SET_UE_CONTEXT})

# control tag values are the handover message numbers 1..12
CONTROL_VALUES = frozenset(range(0x01, 0x0D))

ETH_LEN = 14
FORWARD_TAG_LEN = 1
CONTROL_TAG_LEN = 3
INSTRUCTION_TAG_LEN = 3
UE_CONTEXT_LEN = 17
SMARTHO_LEN = 8

_ETH = struct.Struct("!6s6sH")
_TAG = struct.Struct("!BH")
_CTX = struct.Struct("!HHIBQ")
_SMARTHO = struct.Struct("!II")


class WireError(Exception):
    pass


class Truncated(WireError):
    pass


class InconsistentHeaderStack(WireError):
    pass


def _check_width(name: str, value: int, bits: int) -> None:
    if not isinstance(value, int) or not 0 <= value < (1 << bits):
        raise ValueError(f"{name}={value!r} does not fit in {bits} bits")


def is_experimental(ether_type: int) -> bool:
    return EXPERIMENTAL_MIN <= ether_type <= EXPERIMENTAL_MAX


@dataclass(frozen=True)
class EthernetHeader:
    dst_mac: int
    src_mac: int
    ether_type: int

    def __post_init__(self):
        _check_width("dst_mac", self.dst_mac, 48)
        _check_width("src_mac", self.src_mac, 48)
        _check_width("ether_type", self.ether_type, 16)

    def pack(self) -> bytes:
        return _ETH.pack(self.dst_mac.to_bytes(6, "big"), self.src_mac.to_bytes(6, "big"), self.ether_type)

    @classmethod
    def unpack(cls, data: bytes, offset: int = 0) -> "EthernetHeader":
        if len(data) - offset < ETH_LEN:
            raise Truncated(f"need {ETH_LEN} bytes for Ethernet, have {len(data) - offset}")
        dst, src, etype = _ETH.unpack_from(data, offset)
        return cls(int.from_bytes(dst, "big"), int.from_bytes(src, "big"), etype)


@dataclass(frozen=True)
class ForwardTag:
    dest_port: int

    def __post_init__(self):
        _check_width("dest_port", self.dest_port, 8)

    def pack(self) -> bytes:
        return bytes([self.dest_port])

    @classmethod
    def unpack(cls, data: bytes, offset: int = 0) -> "ForwardTag":
        if len(data) - offset < FORWARD_TAG_LEN:
            raise Truncated("missing forward tag")
        return cls(data[offset])


@dataclass(frozen=True)
class ControlTag:
    tag_value: int
    ue_id: int

    def __post_init__(self):
        if self.tag_value not in CONTROL_VALUES:
            raise ValueError(f"control tag value {self.tag_value:#04x} outside 0x01..0x0c")
        _check_width("ue_id", self.ue_id, 16)

    def pack(self) -> bytes:
        return _TAG.pack(self.tag_value, self.ue_id)

    @classmethod
    def unpack(cls, data: bytes, offset: int = 0) -> "ControlTag":
        if len(data) - offset < CONTROL_TAG_LEN:
            raise Truncated("missing control tag")
        return cls(*_TAG.unpack_from(data, offset))


@dataclass(frozen=True)
class InstructionTag:
    tag_value: int
    ue_id: int

    def __post_init__(self):
        if self.tag_value not in INSTRUCTION_VALUES:
            raise ValueError(f"instruction tag value {self.tag_value:#04x} not in {sorted(INSTRUCTION_VALUES)}")
        _check_width("ue_id", self.ue_id, 16)

    @property
    def carries_context(self) -> bool:
        return self.tag_value in CONTEXT_CARRYING

    def pack(self) -> bytes:
        return _TAG.pack(self.tag_value, self.ue_id)

    @classmethod
    def unpack(cls, data: bytes, offset: int = 0) -> "InstructionTag":
        if len(data) - offset < INSTRUCTION_TAG_LEN:
            raise Truncated("missing instruction tag")
        return cls(*_TAG.unpack_from(data, offset))


@dataclass(frozen=True)
class UeContextHeader:
    ue_id: int
    src_gnb_addr: int
    ue_ambr: int
    security_algorithm: int
    security_base_key: int

    def __post_init__(self):
        _check_width("ue_id", self.ue_id, 16)
        _check_width("src_gnb_addr", self.src_gnb_addr, 16)
        _check_width("ue_ambr", self.ue_ambr, 32)
        _check_width("security_algorithm", self.security_algorithm, 8)
        _check_width("security_base_key", self.security_base_key, 64)

    def pack(self) -> bytes:
        return _CTX.pack(self.ue_id, self.src_gnb_addr, self.ue_ambr, self.security_algorithm, self.security_base_key)

    @classmethod
    def unpack(cls, data: bytes, offset: int = 0) -> "UeContextHeader":
        if len(data) - offset < UE_CONTEXT_LEN:
            raise Truncated("missing UE context header")
        return cls(*_CTX.unpack_from(data, offset))


@dataclass(frozen=True)
class SmarthoHeader:
    ctrl_info: int
    frwd_tag_prt: int

    def __post_init__(self):
        _check_width("ctrl_info", self.ctrl_info, 32)
        _check_width("frwd_tag_prt", self.frwd_tag_prt, 32)

    def pack(self) -> bytes:
        return _SMARTHO.pack(self.ctrl_info, self.frwd_tag_prt)

    @classmethod
    def unpack(cls, data: bytes, offset: int = 0) -> "SmarthoHeader":
        if len(data) - offset < SMARTHO_LEN:
            raise Truncated("missing Smartho header")
        return cls(*_SMARTHO.unpack_from(data, offset))


Tag = Union[ForwardTag, ControlTag, InstructionTag]
Extension = Union[UeContextHeader, SmarthoHeader]


# --- port bits -------------------------------------------------------------
# Physical interfaces nf0..nf3 sit on the even bits, the host-delivery
# interface of each on the odd bit just above it.

NUM_PORTS = 4


def port_bits(index: int) -> int:
    if not 0 <= index < NUM_PORTS:
        raise ValueError(f"port index {index} outside 0..{NUM_PORTS - 1}")
    return 1 << (2 * index)


def host_bits(index: int) -> int:
    if not 0 <= index < NUM_PORTS:
        raise ValueError(f"port index {index} outside 0..{NUM_PORTS - 1}")
    return 1 << (2 * index + 1)


def port_index(bits: int) -> int:
    """Interface index for a one-hot port value (physical or host bit)."""
    if bits <= 0 or bits > 0xFF or bits & (bits - 1):
        raise ValueError(f"{bits:#010b} is not a one-hot port value")
    return (bits.bit_length() - 1) // 2


def is_host_bits(bits: int) -> bool:
    port_index(bits)
    return bool((bits.bit_length() - 1) % 2)


def to_host(bits: int) -> int:
    """Host-delivery bit for the interface named by ``bits``."""
    return host_bits(port_index(bits))


# --- packets -----------------------------------------------------------------

@dataclass(frozen=True)
class PacketMeta:
    ingress_port: int = 0
    egress_port: Optional[int] = None
    created_at: int = 0


@dataclass(frozen=True)
class Packet:
    ethernet: EthernetHeader
    tag: Optional[Tag] = None
    ext: Optional[Extension] = None
    payload: bytes = b""
    meta: PacketMeta = field(default_factory=PacketMeta, compare=False)

    @property
    def headers(self) -> tuple:
        return tuple(h for h in (self.ethernet, self.tag, self.ext) if h is not None)

    @property
    def ue_context(self) -> Optional[UeContextHeader]:
        return self.ext if isinstance(self.ext, UeContextHeader) else None

    @property
    def smartho(self) -> Optional[SmarthoHeader]:
        return self.ext if isinstance(self.ext, SmarthoHeader) else None

    @property
    def header_len(self) -> int:
        return sum(len(h.pack()) for h in self.headers)

    def with_meta(self, **changes) -> "Packet":
        return replace(self, meta=replace(self.meta, **changes))


def check_consistency(packet: Packet) -> None:
    """Raise InconsistentHeaderStack unless the tag/extension match ether_type."""
    etype = packet.ethernet.ether_type
    tag, ext = packet.tag, packet.ext
    if etype == ETH_TYPE_INSTRUCTION:
        if not isinstance(tag, InstructionTag):
            raise InconsistentHeaderStack(f"ether_type {etype:#06x} requires an InstructionTag, got {tag!r}")
        if tag.carries_context:
            if not isinstance(ext, UeContextHeader):
                raise InconsistentHeaderStack(f"instruction {tag.tag_value:#04x} requires a UE context header")
        elif ext is not None:
            raise InconsistentHeaderStack(f"instruction {tag.tag_value:#04x} carries no extension header")
    elif etype == ETH_TYPE_CONTROL:
        if not isinstance(tag, ControlTag) or ext is not None:
            raise InconsistentHeaderStack(f"ether_type {etype:#06x} requires a bare ControlTag")
    elif etype == SMARTHO_TYPE:
        if tag is not None or not isinstance(ext, SmarthoHeader):
            raise InconsistentHeaderStack(f"ether_type {etype:#06x} requires a SmarthoHeader and no tag")
    elif is_experimental(etype):
        if not isinstance(tag, ForwardTag) or ext is not None:
            raise InconsistentHeaderStack(f"ether_type {etype:#06x} requires a bare ForwardTag")
    elif tag is not None or ext is not None:
        raise InconsistentHeaderStack(f"ether_type {etype:#06x} is untagged")


def serialize(packet: Packet) -> bytes:
    check_consistency(packet)
    return b"".join(h.pack() for h in packet.headers) + bytes(packet.payload)


def deserialize(data: bytes, meta: Optional[PacketMeta] = None) -> Packet:
    data = bytes(data)
    eth = EthernetHeader.unpack(data)
    offset = ETH_LEN
    tag = ext = None
    etype = eth.ether_type
    if etype == ETH_TYPE_INSTRUCTION:
        tag = InstructionTag.unpack(data, offset)
        offset += INSTRUCTION_TAG_LEN
        if tag.carries_context:
            ext = UeContextHeader.unpack(data, offset)
            offset += UE_CONTEXT_LEN
    elif etype == ETH_TYPE_CONTROL:
        tag = ControlTag.unpack(data, offset)
        offset += CONTROL_TAG_LEN
    elif etype == SMARTHO_TYPE:
        ext = SmarthoHeader.unpack(data, offset)
        offset += SMARTHO_LEN
    elif is_experimental(etype):
        tag = ForwardTag.unpack(data, offset)
        offset += FORWARD_TAG_LEN
    return Packet(eth, tag, ext, data[offset:], meta or PacketMeta())


def describe(packet: Packet) -> list[str]:
    lines = []
    for h in packet.headers:
        fields = ", ".join(
            f"{k}={v:#x}" if k in ("dst_mac", "src_mac", "ether_type", "tag_value") else f"{k}={v}"
            for k, v in vars(h).items()
        )
        lines.append(f"{type(h).__name__}({fields})")
    if packet.payload:
        lines.append(f"payload[{len(packet.payload)}]={packet.payload.hex()}")
    return lines


def hexdump(data: bytes, width: int = 16) -> str:
    rows = []
    for i in range(0, len(data), width):
        chunk = data[i:i + width]
        rows.append(f"{i:04x}  {chunk.hex(' ')}")
    return "\n".join(rows)

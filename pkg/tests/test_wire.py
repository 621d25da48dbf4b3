import pytest
from hypothesis import given
from hypothesis import strategies as st

from smartho import wire
from smartho.wire import (
    ControlTag, EthernetHeader, ForwardTag, InconsistentHeaderStack, InstructionTag, Packet,
    SmarthoHeader, Truncated, UeContextHeader,
)
from strategies import packets


def eth(etype, dst=0x0A0B0C0D0E0F, src=0x010203040506):
    return EthernetHeader(dst, src, etype)


def test_control_tag_frame_layout():
    data = wire.serialize(Packet(eth(wire.ETH_TYPE_CONTROL), ControlTag(0x0C, 7)))
    # 14 Ethernet + 1 tag value + 2 ue_id
    assert len(data) == 17
    assert data[12:14] == b"\x01\x02"
    assert data[14] == 0x0C
    assert data[15:17] == b"\x00\x07"
    assert wire.deserialize(data).tag == ControlTag(0x0C, 7)


def test_untagged_payload_passes_through():
    data = wire.serialize(Packet(eth(0x0800), payload=b"abcd"))
    assert len(data) == 18
    assert data[-4:] == b"abcd"
    p = wire.deserialize(data)
    assert p.tag is None and p.payload == b"abcd"


def test_smartho_header_bytes():
    data = wire.serialize(Packet(eth(wire.SMARTHO_TYPE), ext=SmarthoHeader(1, 4)))
    assert data[14:] == bytes.fromhex("0000000100000004")


def test_instruction_tag_selected_by_ether_type():
    ctx = UeContextHeader(3, 2, 1000, 1, 0xDEADBEEF)
    data = wire.serialize(Packet(eth(wire.ETH_TYPE_INSTRUCTION), InstructionTag(0x02, 3), ctx))
    assert data[14] == 0x02
    p = wire.deserialize(data)
    assert p.tag == InstructionTag(0x02, 3)
    assert p.ue_context == ctx
    assert len(data) == 14 + 3 + wire.UE_CONTEXT_LEN


def test_store_instruction_has_no_context():
    p = Packet(eth(wire.ETH_TYPE_INSTRUCTION), InstructionTag(wire.INST_STORE_RRC, 9), payload=b"\x01\x02")
    assert wire.deserialize(wire.serialize(p)) == p


@pytest.mark.parametrize("n", [0, 5, 13])
def test_short_frame_truncated(n):
    with pytest.raises(Truncated):
        wire.deserialize(bytes(n))


def test_missing_tag_truncated():
    data = eth(wire.ETH_TYPE_CONTROL).pack() + b"\x01"
    with pytest.raises(Truncated):
        wire.deserialize(data)


def test_missing_context_truncated():
    data = eth(wire.ETH_TYPE_INSTRUCTION).pack() + InstructionTag(1, 1).pack() + bytes(5)
    with pytest.raises(Truncated):
        wire.deserialize(data)


def test_unknown_ether_type_is_untagged():
    data = eth(0x86DD).pack() + b"\x01\x02\x03"
    p = wire.deserialize(data)
    assert p.tag is None and p.ext is None and p.payload == b"\x01\x02\x03"


@pytest.mark.parametrize("pkt", [
    Packet(eth(wire.ETH_TYPE_CONTROL), InstructionTag(1, 1), UeContextHeader(1, 1, 1, 1, 1)),
    Packet(eth(wire.ETH_TYPE_INSTRUCTION), InstructionTag(1, 1)),
    Packet(eth(wire.ETH_TYPE_INSTRUCTION), InstructionTag(0x0F, 1), UeContextHeader(1, 1, 1, 1, 1)),
    Packet(eth(wire.SMARTHO_TYPE), ForwardTag(1), SmarthoHeader(1, 1)),
    Packet(eth(0x0150)),
    Packet(eth(0x0800), ForwardTag(1)),
])
def test_inconsistent_stacks_rejected(pkt):
    with pytest.raises(InconsistentHeaderStack):
        wire.serialize(pkt)


@pytest.mark.parametrize("build", [
    lambda: ControlTag(0x0D, 1),
    lambda: ControlTag(0x00, 1),
    lambda: InstructionTag(0x04, 1),
    lambda: ForwardTag(256),
    lambda: EthernetHeader(2 ** 48, 0, 0),
    lambda: UeContextHeader(0x10000, 0, 0, 0, 0),
])
def test_field_widths_enforced(build):
    with pytest.raises(ValueError):
        build()


@given(packets())
def test_round_trip(p):
    assert wire.deserialize(wire.serialize(p)) == p


@given(packets())
def test_serialization_deterministic(p):
    data = wire.serialize(p)
    assert data == wire.serialize(p)
    assert len(data) == p.header_len + len(p.payload)


def test_port_bits_values():
    assert [wire.port_bits(i) for i in range(4)] == [1, 4, 16, 64]
    assert [wire.host_bits(i) for i in range(4)] == [2, 8, 32, 128]


@given(st.integers(0, 3))
def test_port_index_inverts_encoding(i):
    assert wire.port_index(wire.port_bits(i)) == i
    assert wire.port_index(wire.host_bits(i)) == i
    assert wire.to_host(wire.port_bits(i)) == wire.host_bits(i)
    assert not wire.is_host_bits(wire.port_bits(i))
    assert wire.is_host_bits(wire.host_bits(i))


@pytest.mark.parametrize("bits", [0, 3, 256, -1])
def test_port_index_rejects_non_one_hot(bits):
    with pytest.raises(ValueError):
        wire.port_index(bits)


def test_describe_and_hexdump():
    p = Packet(eth(wire.ETH_TYPE_CONTROL), ControlTag(0x0C, 7), payload=b"\xff")
    lines = wire.describe(p)
    assert lines[1] == "ControlTag(tag_value=0xc, ue_id=7)"
    assert lines[-1] == "payload[1]=ff"
    dump = wire.hexdump(wire.serialize(p))
    assert dump.splitlines()[1].startswith("0010  ")

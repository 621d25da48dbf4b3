"""Hypothesis strategies for valid packets."""
from hypothesis import strategies as st

from smartho import wire
from smartho.wire import ControlTag, EthernetHeader, ForwardTag, InstructionTag, Packet, SmarthoHeader, UeContextHeader

u8 = st.integers(0, 0xFF)
u16 = st.integers(0, 0xFFFF)
u32 = st.integers(0, 0xFFFFFFFF)
u64 = st.integers(0, 2 ** 64 - 1)
mac = st.integers(0, 2 ** 48 - 1)
payloads = st.binary(max_size=64)

ue_contexts = st.builds(UeContextHeader, u16, u16, u32, u8, u64)


@st.composite
def packets(draw):
    kind = draw(st.sampled_from(["instruction", "control", "smartho", "forward", "plain"]))
    dst, src, payload = draw(mac), draw(mac), draw(payloads)
    if kind == "instruction":
        tag = InstructionTag(draw(st.sampled_from(sorted(wire.INSTRUCTION_VALUES))), draw(u16))
        ext = draw(ue_contexts) if tag.carries_context else None
        return Packet(EthernetHeader(dst, src, wire.ETH_TYPE_INSTRUCTION), tag, ext, payload)
    if kind == "control":
        tag = ControlTag(draw(st.sampled_from(sorted(wire.CONTROL_VALUES))), draw(u16))
        return Packet(EthernetHeader(dst, src, wire.ETH_TYPE_CONTROL), tag, None, payload)
    if kind == "smartho":
        return Packet(EthernetHeader(dst, src, wire.SMARTHO_TYPE), None, SmarthoHeader(draw(u32), draw(u32)), payload)
    if kind == "forward":
        etype = draw(st.integers(wire.ETH_TYPE_FORWARD, wire.EXPERIMENTAL_MAX))
        return Packet(EthernetHeader(dst, src, etype), ForwardTag(draw(u8)), None, payload)
    etype = draw(u16.filter(lambda t: not wire.is_experimental(t)))
    return Packet(EthernetHeader(dst, src, etype), payload=payload)

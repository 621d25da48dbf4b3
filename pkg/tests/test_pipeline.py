import pytest
from hypothesis import given
from hypothesis import strategies as st

from smartho import pipeline, wire
from smartho.pipeline import (
    CostModel, DeparseError, Drop, DuplicateKey, Forward, MalformedProgram, MatchActionTable,
    ParserProgram, Reject, Switch, ToController, UnknownAction, run_parser,
)
from smartho.wire import ControlTag, EthernetHeader, ForwardTag, InstructionTag, Packet, SmarthoHeader, UeContextHeader
from strategies import packets

M1, M2 = 0x020000000001, 0x020000000002
NF0, NF1, NF2 = wire.port_bits(0), wire.port_bits(1), wire.port_bits(2)


def frame(etype, tag=None, ext=None, payload=b"", src=M2, dst=M1):
    return wire.serialize(Packet(EthernetHeader(dst, src, etype), tag, ext, payload))


def ctx_frame(tag_value=0x01, ue=5, gnb=2):
    return frame(wire.ETH_TYPE_INSTRUCTION, InstructionTag(tag_value, ue), UeContextHeader(ue, gnb, 1000, 1, 42))


def parse(name, data):
    return run_parser(pipeline.load_program(name).parser, data)


# --- parser ------------------------------------------------------------------

def test_cu_parser_control_tag():
    p = parse("cu", frame(wire.ETH_TYPE_CONTROL, ControlTag(0x0C, 7)))
    assert p.tag == ControlTag(0x0C, 7)
    assert p.parsed_bytes == 17


def test_du_parser_instruction_with_context():
    p = parse("du", ctx_frame(0x01))
    assert isinstance(p.tag, InstructionTag)
    assert p.ue_context.ue_id == 5
    assert p.states == ("start", "parse_inst_tag", "parse_ue_context")


def test_du_parser_accepts_plain_ethernet():
    p = parse("du", frame(0x0800, payload=b"xyz"))
    assert list(p.headers) == ["ethernet"]
    assert p.payload == b"xyz"


def test_du_parser_store_instruction_stops_after_tag():
    p = parse("du", frame(wire.ETH_TYPE_INSTRUCTION, InstructionTag(0x0F, 3), payload=b"\x00" * 7))
    assert list(p.headers) == ["ethernet", "tag"]
    assert len(p.payload) == 7


def test_truncated_frame_rejected():
    data = ctx_frame()[:-3]
    r = parse("du", data)
    assert isinstance(r, Reject) and not r


def test_bad_tag_value_rejected():
    data = EthernetHeader(M1, M2, wire.ETH_TYPE_CONTROL).pack() + bytes([0x44, 0, 1])
    assert isinstance(parse("cu", data), Reject)


def test_missing_case_without_default_rejects():
    prog = ParserProgram.from_dict({"states": {
        "start": {"extract": "ethernet", "select": "ethernet.ether_type", "cases": {"0x0800": "ip"}, "default": "reject"},
        "ip": {"extract": "ipv4"},
    }})
    assert isinstance(run_parser(prog, frame(0x0801, payload=bytes(20))), Reject)


@pytest.mark.parametrize("states,msg", [
    ({"start": {"extract": "ethernet", "default": "nowhere"}}, "undefined"),
    ({"start": {"extract": "ethernet", "default": "a"}, "a": {"extract": "tag.t1", "default": "start"}}, "cycle"),
    ({"start": {"extract": "tag.t1"}}, "illegal"),
    ({"start": {"extract": "ethernet", "select": "tag.tag_value", "cases": {"1": "accept"}}}, "before extracting"),
    ({"start": {"extract": "bogus"}}, "unknown header"),
    ({"start": {"extract": "ethernet", "default": "a"}, "a": {"extract": "ue_context"}}, "illegal"),
])
def test_malformed_programs(states, msg):
    with pytest.raises(MalformedProgram, match=msg):
        ParserProgram.from_dict({"states": states})


def test_parser_program_round_trip():
    prog = pipeline.load_program("cu").parser
    assert ParserProgram.from_dict(prog.to_dict()) == prog


# --- tables ------------------------------------------------------------------

def table():
    return MatchActionTable("etherforward", "ethernet.dst_mac", {"ether_port_forward", "operation_drop"})


def test_table_insert_and_lookup():
    t = table().add(M1, "ether_port_forward", {"port": NF1})
    assert t.lookup(M1) == ("ether_port_forward", {"port": NF1}, True)
    assert t.lookup(M2) == ("operation_drop", {}, False)


def test_table_duplicate_key():
    t = table().add(M1, "ether_port_forward", {"port": NF1})
    with pytest.raises(DuplicateKey):
        t.add(M1, "ether_port_forward", {"port": NF2})


def test_table_unknown_action():
    with pytest.raises(UnknownAction):
        table().add(M1, "ipv4_forward", {"port": 1})
    with pytest.raises(UnknownAction):
        MatchActionTable("t", "x.y", {"fly"})


def test_table_string_keys_normalised():
    t = table().add("0x020000000001", "ether_port_forward", {"port": 4})
    assert t.lookup(M1)[2]


@given(st.sets(st.integers(0, 255), max_size=40), st.lists(st.integers(0, 255), min_size=1, max_size=100))
def test_table_hits_exactly_inserted_keys(inserted, probes):
    t = table()
    for k in inserted:
        t.add(k, "ether_port_forward", {"port": 1})
    for k in probes:
        action, _, hit = t.lookup(k)
        assert hit == (k in inserted)
        assert action == ("ether_port_forward" if hit else "operation_drop")


def test_table_dict_round_trip():
    t = pipeline.load_program("du").tables["smartho_lookup"]
    t.add((1, 2), "smartho_rewrite", {"next_ctrl_info": 2, "port": 4})
    again = MatchActionTable.from_dict(t.to_dict())
    assert again.entries == t.entries and again.key_field == t.key_field


# --- CU control block ----------------------------------------------------------

def cu_switch():
    prog = pipeline.load_program("cu")
    prog.table_add("etherforward", M1, "ether_port_forward", {"port": NF1})
    prog.table_add("source_gnb_controller_forward", 2, "prepare_port_forward", {"port": NF2})
    return Switch(prog)


def test_cu_context_goes_to_controller():
    out = cu_switch().process(ctx_frame(0x03), NF1)
    assert isinstance(out.verdict, ToController)
    assert out.verdict.message.meta.egress_port == wire.host_bits(1)
    assert out.branch == "context"


def test_cu_tag_only_uses_source_gnb_table():
    data = frame(wire.ETH_TYPE_CONTROL, ControlTag(0x05, 1))
    out = cu_switch().process(data, NF1)
    # ControlTag has no ue_context, so the key reads as zero: miss, dropped
    assert isinstance(out.verdict, Drop)
    prog = cu_switch().program
    prog.table_add("source_gnb_controller_forward", 0, "prepare_port_forward", {"port": NF2})
    out = Switch(prog).process(data, NF1)
    assert out.verdict == Forward(NF2)
    assert out.branch == "tag"


def test_cu_untagged_unknown_mac_dropped():
    out = cu_switch().process(frame(0x0800, dst=0x0200000000EE), NF1)
    assert isinstance(out.verdict, Drop)
    assert out.branch == "untagged"


def test_cu_untagged_known_mac_forwarded():
    assert cu_switch().process(frame(0x0800), NF2).verdict == Forward(NF1)


def test_cu_release_complete_raises_digest():
    prog = cu_switch().program
    prog.table_add("source_gnb_controller_forward", 0, "prepare_port_forward", {"port": wire.host_bits(0)})
    out = Switch(prog).process(frame(wire.ETH_TYPE_CONTROL, ControlTag(0x0C, 9), src=0x020000000003), NF1)
    assert out.verdict == Forward(wire.host_bits(0))
    (note,) = out.digests
    assert note.tag == InstructionTag(wire.INST_MOBILITY, 9)
    assert note.ue_context.src_gnb_addr == 3
    other = Switch(prog).process(frame(wire.ETH_TYPE_CONTROL, ControlTag(0x0B, 9)), NF1)
    assert other.digests == ()


@given(packets())
def test_cu_branches_mutually_exclusive(p):
    out = cu_switch().process(wire.serialize(p), NF1)
    assert out.branch in {"context", "tag", "untagged", "parser"}
    assert isinstance(out.verdict, (Forward, Drop, ToController))


# --- DU control block ----------------------------------------------------------

def du_switch():
    prog = pipeline.load_program("du")
    prog.table_add("etherforward", M1, "ether_port_forward", {"port": NF1})
    prog.table_add("smartho_lookup", (1, NF1), "smartho_rewrite", {"next_ctrl_info": 1, "port": 16})
    return Switch(prog)


def test_du_smartho_frame_egress_from_header():
    out = du_switch().process(frame(wire.SMARTHO_TYPE, ext=SmarthoHeader(1, 4)), NF1)
    assert out.verdict == Forward(4)
    assert out.modified.smartho == SmarthoHeader(1, 16)


def test_du_smartho_lookup_miss_keeps_header():
    out = du_switch().process(frame(wire.SMARTHO_TYPE, ext=SmarthoHeader(7, 16)), NF2)
    assert out.verdict == Forward(16)
    assert out.modified.smartho == SmarthoHeader(7, 16)


def test_du_store_instruction_to_controller():
    data = frame(wire.ETH_TYPE_INSTRUCTION, InstructionTag(0x0F, 3), payload=bytes(7))
    out = du_switch().process(data, NF2)
    assert isinstance(out.verdict, ToController)
    assert out.branch == "rrc"


def test_du_measurement_report_to_controller():
    out = du_switch().process(frame(wire.ETH_TYPE_CONTROL, ControlTag(0x01, 3)), NF1)
    assert isinstance(out.verdict, ToController)


def test_du_context_to_controller():
    out = du_switch().process(ctx_frame(0x02), NF2)
    assert isinstance(out.verdict, ToController) and out.branch == "context"


def test_du_other_traffic_on_mac():
    sw = du_switch()
    assert sw.process(frame(wire.ETH_TYPE_CONTROL, ControlTag(0x06, 3)), NF2).verdict == Forward(NF1)
    assert isinstance(sw.process(frame(0x0800, dst=0xFFFF), NF2).verdict, Drop)


# --- forwarding baselines -------------------------------------------------------

def ip_frame(dst="10.0.0.2"):
    ip = pipeline.Ipv4Header(pipeline.ip_address("10.0.0.1"), pipeline.ip_address(dst), total_length=20)
    return EthernetHeader(M1, M2, wire.ETH_TYPE_IPV4).pack() + ip.pack()


def forwarding_switches():
    ip = pipeline.load_program("ip")
    ip.table_add("ipv4_lpm", pipeline.ip_address("10.0.0.2"), "ipv4_forward", {"port": NF1})
    tag = pipeline.load_program("tag")
    tag.table_add("tag_forward", 2, "tag_port_forward", {"port": NF1})
    return Switch(ip), Switch(tag)


def test_ip_hit_and_miss():
    ip, _ = forwarding_switches()
    assert ip.process(ip_frame(), NF0).verdict == Forward(NF1)
    assert isinstance(ip.process(ip_frame("10.0.0.9"), NF0).verdict, Drop)


def test_default_cost_of_one_pass():
    ip, tag = forwarding_switches()
    t = tag.cost(tag.process(frame(wire.ETH_TYPE_FORWARD, ForwardTag(2)), NF0))
    i = ip.cost(ip.process(ip_frame(), NF0))
    # 15 bytes * 0.05 + 0.5 + 0.2 and 34 bytes * 0.05 + 0.5 + 0.2
    assert t == pytest.approx(1.45)
    assert i == pytest.approx(2.4)


@given(st.floats(1e-6, 10), st.floats(0, 10), st.floats(0, 10))
def test_ip_costs_more_than_tag(byte_cost, lookup_cost, action_cost):
    cm = CostModel(byte_cost, lookup_cost, action_cost)
    ip, tag = forwarding_switches()
    t = tag.process(frame(wire.ETH_TYPE_FORWARD, ForwardTag(2)), NF0).processing_time(cm)
    i = ip.process(ip_frame(), NF0).processing_time(cm)
    assert i > t


def test_cost_model_rejects_negative():
    with pytest.raises(ValueError):
        CostModel(per_action_cost=-1)


# --- deparse ------------------------------------------------------------------------

@given(packets())
def test_unmodified_deparse_is_identity(p):
    data = wire.serialize(p)
    parsed = parse("cu", data)
    if parsed:
        assert parsed.deparse() == data


def test_deparse_forward_identity():
    sw = cu_switch()
    data = frame(0x0800, payload=b"hello")
    assert pipeline.deparse(sw.process(data, NF2)) == data


def test_deparse_reflects_rewrite():
    out = du_switch().process(frame(wire.SMARTHO_TYPE, ext=SmarthoHeader(1, 4)), NF1)
    data = pipeline.deparse(out)
    assert data[14:18] == (1).to_bytes(4, "big")
    assert data[18:22] == (16).to_bytes(4, "big")
    prog = pipeline.load_program("du")
    prog.table_add("smartho_lookup", (1, NF1), "smartho_rewrite", {"next_ctrl_info": 2, "port": 4})
    data = pipeline.deparse(Switch(prog).process(frame(wire.SMARTHO_TYPE, ext=SmarthoHeader(1, 4)), NF1))
    assert data[14:18] == b"\x00\x00\x00\x02"


def test_deparse_of_drop_fails():
    out = cu_switch().process(frame(0x0800, dst=0xAB), NF1)
    with pytest.raises(DeparseError):
        pipeline.deparse(out)


def test_deparse_ip_frame_identity():
    ip, _ = forwarding_switches()
    data = ip_frame()
    assert pipeline.deparse(ip.process(data, NF0)) == data


# --- switch -----------------------------------------------------------------------

@given(packets())
def test_processing_is_deterministic(p):
    data = wire.serialize(p)
    a = Switch(du_switch().program, memo=False).process(data, NF1)
    b = Switch(du_switch().program, memo=False).process(data, NF1)
    assert a.verdict == b.verdict and a.branch == b.branch
    assert (a.parsed_bytes, a.lookups, a.actions) == (b.parsed_bytes, b.lookups, b.actions)


def test_switch_counts_rejects():
    sw = cu_switch()
    bad = EthernetHeader(M1, M2, wire.ETH_TYPE_CONTROL).pack()
    for _ in range(2):
        out = sw.process(bad, NF1)
    assert isinstance(out.verdict, Drop) and out.branch == "parser"
    assert (sw.passes, sw.rejects) == (2, 2)


def test_program_dict_round_trip():
    prog = cu_switch().program
    again = pipeline.SwitchProgram.from_dict(prog.to_dict())
    assert again.parser == prog.parser
    assert {k: t.entries for k, t in again.tables.items()} == {k: t.entries for k, t in prog.tables.items()}


def test_unknown_control_block():
    with pytest.raises(MalformedProgram):
        pipeline.SwitchProgram("x", "nope", pipeline.load_program("cu").parser, {})


def test_load_program_from_path(tmp_path):
    import json

    path = tmp_path / "p.json"
    path.write_text(json.dumps(pipeline.load_program("tag").to_dict()))
    assert pipeline.load_program(str(path)).control == "tag"

"""Four-host hardware chain RRH - S_DU - T_DU - CU driven by Smartho frames.

Each host's switch runs the ``du`` program.  A frame carries the message
number (ctrl_info) and the egress the *receiving* switch must use
(frwd_tag_prt).  At a message's destination the switch rewrites the frame
into the next message of the flow, standing in for the host's reply; the
per-switch lookup tables that make this work are generated here from the
message flow and shipped in ``data/testbed.json``.

Cabling: RRH.nf1-S_DU.nf1, S_DU.nf2-T_DU.nf1, T_DU.nf2-CU.nf1.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

from . import pipeline, wire
from .wire import EthernetHeader, Packet, SmarthoHeader

NODES = ("RRH", "S_DU", "T_DU", "CU")
NF1 = wire.port_bits(1)
NF2 = wire.port_bits(2)

# message number -> (sender, receiver)
TRADITIONAL_FLOW = (
    (1, "RRH", "S_DU"),
    (2, "S_DU", "CU"),
    (3, "CU", "T_DU"),
    (4, "T_DU", "CU"),
    (5, "CU", "S_DU"),
    (6, "S_DU", "RRH"),
    (7, "RRH", "T_DU"),
    (8, "T_DU", "CU"),
    (9, "CU", "T_DU"),
    (10, "T_DU", "CU"),
    (11, "CU", "S_DU"),
    (12, "S_DU", "CU"),
)

# preparation already done: the source answers the MR with the stored RRC reconfiguration
SMARTHO_FLOW = ((1, "RRH", "S_DU"),) + TRADITIONAL_FLOW[5:]

FLOWS = {"traditional": TRADITIONAL_FLOW, "smartho": SMARTHO_FLOW}


def _egress(node: int, toward: int) -> int:
    if toward > node:
        return NF1 if node == 0 else NF2
    return NF1


def _arrival(node: int, came_from: int) -> int:
    if came_from < node:
        return NF1
    return NF1 if node == 0 else NF2


def _neighbour(node: int, egress: int) -> int:
    if node == 0:
        return 1
    return node + 1 if egress == NF2 else node - 1


@dataclass(frozen=True)
class Visit:
    node: str
    src_port: int
    ctrl_in: int
    egress: int


def _planned_visits(flow) -> list:
    """Switch visits (node index, src_port, ctrl_in, ctrl_out) for a flow."""
    idx = {n: i for i, n in enumerate(NODES)}
    first_src = idx[flow[0][1]]
    visits = []
    here, came_from = first_src, None
    for n, (msg, src, dst) in enumerate(flow):
        if idx[src] != here:
            raise ValueError(f"message {msg} starts at {src} but the frame is at {NODES[here]}")
        target = idx[dst]
        step = 1 if target > here else -1
        node = here
        while True:
            if came_from is None:
                sp = wire.host_bits(1)
            else:
                sp = _arrival(node, came_from)
            if node == target:
                nxt = flow[n + 1][0] if n + 1 < len(flow) else msg
                visits.append((node, sp, msg, nxt))
                break
            if node != here or n == 0:
                visits.append((node, sp, msg, msg))
            came_from, node = node, node + step
        here = target
    return visits


def build_tables(flow) -> dict:
    """Per-node smartho_lookup entries {node: {(ctrl, src_port): (next_ctrl, port)}}."""
    visits = _planned_visits(flow)
    tables: dict = {n: {} for n in NODES}
    for i, (node, sp, c_in, c_out) in enumerate(visits):
        if i + 1 < len(visits):
            nxt_node = visits[i + 1][0]
            # egress the next switch will use: toward the one after it, or its host
            if i + 2 < len(visits):
                port = _egress(nxt_node, visits[i + 2][0])
            else:
                port = wire.host_bits(1)
        else:
            continue  # terminal visit: lookup misses, frame goes to the host
        key = (c_in, sp)
        entry = (c_out, port)
        prev = tables[NODES[node]].get(key)
        if prev is not None and prev != entry:
            raise ValueError(f"conflicting lookup entries at {NODES[node]} for {key}: {prev} vs {entry}")
        tables[NODES[node]][key] = entry
    return tables


def initial_frame(flow) -> Packet:
    visits = _planned_visits(flow)
    first_egress = _egress(visits[0][0], visits[1][0])
    return Packet(
        EthernetHeader(0xFFFFFFFFFFFF, 0x020000000001, wire.SMARTHO_TYPE),
        ext=SmarthoHeader(flow[0][0], first_egress),
    )


def tables_to_json(all_tables: dict) -> dict:
    out = {}
    for flow, per_node in all_tables.items():
        out[flow] = {
            node: [
                {"key": [c, sp], "action": "smartho_rewrite", "params": {"next_ctrl_info": nc, "port": p}}
                for (c, sp), (nc, p) in sorted(entries.items())
            ]
            for node, entries in per_node.items()
        }
    return out


def generate() -> dict:
    return tables_to_json({name: build_tables(flow) for name, flow in FLOWS.items()})


def load_shipped() -> dict:
    return json.loads(pipeline.data_path("testbed.json").read_text())


def build_switches(flow_name: str, cost_model: Optional[pipeline.CostModel] = None) -> dict:
    entries = load_shipped()[flow_name]
    switches = {}
    for node in NODES:
        prog = pipeline.load_program("du")
        for e in entries[node]:
            prog.table_add("smartho_lookup", tuple(e["key"]), e["action"], e["params"])
        switches[node] = pipeline.Switch(prog, cost_model)
    return switches


def walk(flow_name: str, max_visits: int = 64) -> list:
    """Send the first frame of a flow through the chain until a host takes it."""
    switches = build_switches(flow_name)
    frame = wire.serialize(initial_frame(FLOWS[flow_name]))
    node, ingress = 0, wire.host_bits(1)
    visits = []
    for _ in range(max_visits):
        out = switches[NODES[node]].process(frame, ingress)
        if not isinstance(out.verdict, pipeline.Forward):
            raise RuntimeError(f"{NODES[node]} did not forward: {out.verdict}")
        ctrl_in = pipeline.run_parser(switches[NODES[node]].program.parser, frame).smartho.ctrl_info
        egress = out.verdict.egress
        visits.append(Visit(NODES[node], ingress, ctrl_in, egress))
        if wire.is_host_bits(egress):
            return visits
        frame = pipeline.deparse(out)
        nxt = _neighbour(node, egress)
        ingress = _arrival(nxt, node)
        node = nxt
    raise RuntimeError("frame never reached a host")


def delivered_sequence(visits: list) -> list:
    """Message numbers in the order they reached their receiving switch."""
    seq = []
    for v in visits:
        if not seq or seq[-1] != v.ctrl_in:
            seq.append(v.ctrl_in)
    return seq

import json
import math

import pytest

from smartho.control import MobilityEntry
from smartho.sim import metrics
from smartho.sim.config import ConfigError, ScenarioConfig, load_config
from smartho.sim.handover import ROUTES, HandoverSim, HoMessage, calibrate_drop_threshold, run_scenario


def cfg(**kw):
    base = dict(ue_count=2, seed=3, drop_threshold_us=math.inf)
    base.update(kw)
    return ScenarioConfig(**base)


def ho_events(rep, ue=None):
    return [e for e in rep.trace if e.kind in ("tx", "rx") and (ue is None or e.ue == ue)]


def rx_sequence(rep, ue, hop):
    return [int(e.message) for e in rep.trace if e.kind == "rx" and e.ue == ue and e.hop == hop]


# preparation (3-5) lands before the report, which the source answers with 6 at once
PREEXECUTED = [3, 4, 5, 1, 6, 7, 8, 9, 10, 11, 12]


def test_message_enumeration():
    assert [m.value for m in HoMessage] == list(range(1, 13))
    assert ROUTES[1] == ("UE", "S_DU") and ROUTES[12] == ("S_DU", "CU")


@pytest.mark.parametrize("tandem", [1, 3])
def test_traditional_runs_twelve_messages_per_hop(tandem):
    rep = run_scenario(cfg(tandem=tandem))
    for ue in (1, 2):
        for hop in range(1, tandem + 1):
            assert rx_sequence(rep, ue, hop) == list(range(1, 13))


def test_messages_travel_configured_routes():
    rep = run_scenario(cfg(tandem=2, ue_count=1))
    role = {"UE": "UE1", "CU": "CU"}
    for e in ho_events(rep):
        sender, receiver = ROUTES[int(e.message)]
        s_du, t_du = f"DU{e.hop}", f"DU{e.hop + 1}"
        names = {**role, "S_DU": s_du, "T_DU": t_du}
        assert e.node == names[sender if e.kind == "tx" else receiver]


def test_single_handover_identical_between_modes():
    trad = run_scenario(cfg(tandem=1))
    smart = run_scenario(cfg(tandem=1, mode="smartho"))
    assert [r.ho_time for r in trad.records] == [r.ho_time for r in smart.records]
    assert [e.line() for e in ho_events(trad)] == [e.line() for e in ho_events(smart)]
    assert any(e.kind == "ctl" for e in smart.trace)


def test_later_hops_are_preexecuted():
    rep = run_scenario(cfg(tandem=3, ue_count=1, mode="smartho"))
    for hop in (2, 3):
        assert rx_sequence(rep, 1, hop) == PREEXECUTED
        times = {(e.kind, int(e.message), e.hop): e.time for e in rep.trace if e.kind in ("tx", "rx")}
        assert times[("rx", 12, hop - 1)] <= times[("rx", 3, hop)] < times[("tx", 1, hop)]
        assert times[("rx", 4, hop)] < times[("tx", 1, hop)]
    assert rep.counters["preexecuted"] == 2
    assert rep.counters["replays"] == 2


def test_replayed_rrc_matches_stored_entry():
    sim = HandoverSim(cfg(tandem=2, ue_count=1, mode="smartho"))
    stored, replayed = [], []
    for du, ctl in sim.du_ctrl.items():
        orig = ctl.du_data_updt

        def spy(packet, ue_mac=0, orig=orig):
            res = orig(packet, ue_mac)
            (replayed if hasattr(res, "packet") else stored).append(res.entry)
            return res

        ctl.du_data_updt = spy
    sim.run()
    assert stored and stored == replayed
    assert stored[0] == sim.rrc_entry(1, 2)


def test_spoofed_request_reserves_like_genuine():
    reservations = {}
    for mode in ("traditional", "smartho"):
        sim = HandoverSim(cfg(tandem=3, ue_count=2, mode=mode))
        made = []
        orig = sim._reserve
        sim._reserve = lambda du, ue, hop, orig=orig, made=made: (made.append((du, ue, hop)), orig(du, ue, hop))
        sim.run()
        reservations[mode] = sorted(made)
        assert sim.reservations == {}
    assert reservations["traditional"] == reservations["smartho"]


def test_fallback_for_ue_without_mobility_rows():
    trad = run_scenario(cfg(tandem=3, ue_count=1))
    smart = run_scenario(cfg(tandem=3, ue_count=1, mode="smartho", mt_rows=()))
    assert [e.line() for e in ho_events(trad)] == [e.line() for e in ho_events(smart)]
    assert smart.counters["preexecuted"] == 0
    assert smart.counters["fallbacks"] == 3


def test_partial_mobility_table():
    # the row for the releasing DU names the serving one; the serving DU's row names the next target
    rows = (MobilityEntry(1, 1, 2, 0), MobilityEntry(1, 2, 3, 0))
    rep = run_scenario(cfg(tandem=3, ue_count=1, mode="smartho", mt_rows=rows))
    assert rx_sequence(rep, 1, 2) == PREEXECUTED
    assert rx_sequence(rep, 1, 3) == list(range(1, 13))


def test_guard_expiry_wastes_preallocation():
    # the spoofed preparation lands long before the UE's next report
    smart = run_scenario(cfg(tandem=2, ue_count=1, mode="smartho", guard_us=30_000, min_dwell_us=200_000))
    assert smart.wasted_preallocations == 1
    assert any(e.message == "guard_expired" for e in smart.trace)
    assert rx_sequence(smart, 1, 2) == [3, 4, 5] + list(range(1, 13))
    trad = run_scenario(cfg(tandem=2, ue_count=1, guard_us=30_000, min_dwell_us=200_000))
    assert trad.wasted_preallocations == 0


def test_delayed_trigger_reaches_target_later():
    early = run_scenario(cfg(tandem=2, ue_count=1, mode="smartho", chain_time_interval=0))
    late = run_scenario(cfg(tandem=2, ue_count=1, mode="smartho", chain_time_interval=20_000))

    def pre_rx(rep):
        return next(e.time for e in rep.trace if e.kind == "rx" and e.message == "3" and e.hop == 2)

    assert pre_rx(late) - pre_rx(early) == 20_000


def test_auto_interval_uses_delay_budget():
    sim = HandoverSim(cfg(tandem=2, mode="smartho", chain_time_interval="auto"))
    assert sim.auto_delay_us is not None and sim.auto_delay_us > 0
    rep = sim.run()
    assert rep.counters["preexecuted"] == 2


@pytest.mark.parametrize("threshold,pct", [(math.inf, 0.0), (0, 100.0)])
def test_threshold_extremes(threshold, pct):
    rep = run_scenario(cfg(tandem=2, drop_threshold_us=threshold))
    assert rep.drop_pct() == pct


def test_calibrated_threshold_is_five_single_handovers():
    c = cfg(drop_threshold_us=None)
    single = run_scenario(c.with_(ue_count=1, tandem=1, drop_threshold_us=math.inf)).records[0].ho_time
    assert calibrate_drop_threshold(c) == 5 * single
    assert run_scenario(c).drop_threshold_us == 5 * single


def test_conservation_and_no_leftovers():
    rep = run_scenario(cfg(tandem=3, ue_count=4, parallel_pings=120, mode="smartho", seed=2))
    c = rep.counters
    assert c["injected"] == c["delivered"] + c["lost"] + c["in_flight"]
    assert c["in_flight"] == 0
    assert c["lost"] > 0 and c["retransmissions"] == c["lost"]


def test_router_conservation():
    sim = HandoverSim(cfg(tandem=2, parallel_pings=120, seed=5))
    rep = sim.run()
    for r in sim.routers():
        assert r.stats(at=rep.counters["end_time_us"]).conserved


def test_same_seed_same_csv():
    c = cfg(tandem=3, parallel_pings=40, mode="smartho")
    assert run_scenario(c).to_csv() == run_scenario(c).to_csv()
    assert run_scenario(c).to_csv() != run_scenario(c.with_(seed=4)).to_csv()


def test_csv_columns():
    text = run_scenario(cfg(tandem=1)).to_csv()
    header, *rows = text.splitlines()
    assert tuple(header.split(",")) == metrics.HO_COLUMNS
    assert len(rows) == 2


# --- metrics ---------------------------------------------------------------------

def test_measure_ho():
    rec = metrics.measure_ho(1, 1, 100, 350, 200)
    assert rec.ho_time == 250 and rec.dropped
    assert not metrics.measure_ho(1, 1, 100, 350, 250).dropped
    with pytest.raises(metrics.MissingTimestamp):
        metrics.measure_ho(1, 1, 100, None, 1e9)


def test_unfinished_counts_as_dropped():
    rep = metrics.MetricsReport("traditional", 1, 0, 1, "x", math.inf,
                                records=[metrics.unfinished(1, 1, 5), metrics.measure_ho(2, 1, 0, 10, math.inf)])
    assert rep.drop_pct() == 50.0
    assert rep.per_ue_total() == {2: 10}
    assert rep.rows()[0]["ho_time_us"] == ""


def test_percentile():
    assert metrics.percentile([1, 2, 3, 4, 5], 50) == 3
    assert metrics.percentile([7], 95) == 7
    with pytest.raises(ValueError):
        metrics.percentile([1], 100)


# --- config ------------------------------------------------------------------------

@pytest.mark.parametrize("kw", [
    dict(mode="fast"), dict(tandem=0), dict(ue_count=0), dict(guard_us=0), dict(seed=-1),
    dict(parallel_pings=-1), dict(chain_time_interval="later"),
    dict(mt_rows=(MobilityEntry(1, 1, 9),)),
])
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        ScenarioConfig(**kw)


def test_unstable_processing_unit_rejected():
    d = ScenarioConfig().to_dict()
    d["topology"]["rates_cu"] = {"lambda": 5.0, "mu": 1.0}
    with pytest.raises(ConfigError, match="rates_cu"):
        ScenarioConfig.from_dict(d)


def test_config_round_trip_and_hash():
    c = cfg(mt_rows=(MobilityEntry(1, 1, 2, "auto"),))
    again = ScenarioConfig.from_dict(c.to_dict())
    assert again == c and again.config_hash() == c.config_hash()
    assert c.with_(seed=9).config_hash() != c.config_hash()


def test_unknown_config_key(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"tandem": 2, "warp": 9}))
    with pytest.raises(ConfigError, match="warp"):
        load_config(path)


def test_invalid_json_reports_position(tmp_path):
    path = tmp_path / "c.json"
    path.write_text('{\n  "tandem": 2,\n  oops\n}')
    with pytest.raises(ConfigError, match="line 3 column 3"):
        load_config(path)


def test_shipped_scenario_loads():
    from smartho.pipeline import data_path

    c = load_config(data_path("scenario.json"))
    assert c.tandem >= 1

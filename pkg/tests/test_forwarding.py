import math

import pytest

from smartho.sim import forwarding as fwd
from smartho.sim.metrics import FORWARDING_COLUMNS, forwarding_csv

SMALL = fwd.ForwardingConfig(transit_switches=(1, 2), loads=(0, 30), pings_per_process=20)


def by_key(records):
    return {(r.mode, r.transit_switches, r.parallel_pings): r for r in records}


def test_no_load_no_drops():
    for mode in fwd.FORWARDING_MODES:
        (rec,) = fwd.run_forwarding_experiment(mode, 4, 0, SMALL)
        assert rec.drop_count == 0
        assert rec.received == rec.sent == SMALL.pings_per_process


def test_unloaded_round_trip_time():
    # one ping through one switch: four link traversals and two pipeline passes
    cfg = fwd.ForwardingConfig(pings_per_process=1)
    (tag,) = fwd.run_forwarding_experiment(fwd.TAG, 1, 0, cfg)
    (ip,) = fwd.run_forwarding_experiment(fwd.IP, 1, 0, cfg)
    assert tag.avg_response_us == pytest.approx(4 * 5.0 + 2 * 1.45)
    assert ip.avg_response_us == pytest.approx(4 * 5.0 + 2 * 2.4)


def test_tag_faster_than_ip():
    recs = by_key(fwd.run_forwarding_grid(SMALL))
    for n in SMALL.transit_switches:
        for load in SMALL.loads:
            assert recs[("tag", n, load)].avg_response_us < recs[("ip", n, load)].avg_response_us


def test_small_buffer_drops_more_for_ip():
    cfg = fwd.ForwardingConfig(switch_buffer=2, ping_interval_us=20.0, pings_per_process=30)
    (tag,) = fwd.run_forwarding_experiment(fwd.TAG, 4, 40, cfg)
    (ip,) = fwd.run_forwarding_experiment(fwd.IP, 4, 40, cfg)
    assert ip.drop_count > 0
    assert tag.drop_count <= ip.drop_count
    assert tag.received + tag.drop_count == tag.sent
    assert ip.received + ip.drop_count == ip.sent


def test_deterministic():
    assert fwd.run_forwarding_grid(SMALL) == fwd.run_forwarding_grid(SMALL)


def test_unknown_mode():
    with pytest.raises(ValueError):
        fwd.run_forwarding_experiment("mpls", 1, 0, SMALL)


@pytest.mark.parametrize("kw", [dict(ping_interval_us=0), dict(switch_buffer=0), dict(transit_switches=(0,)),
                                dict(loads=(-1,)), dict(pings_per_process=0)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        fwd.ForwardingConfig(**kw)


def test_config_round_trip():
    assert fwd.ForwardingConfig.from_dict(SMALL.to_dict()) == SMALL


def test_csv():
    recs = fwd.run_forwarding_experiment(fwd.TAG, 1, [0], SMALL)
    header, row = forwarding_csv(recs, "abc", 1).splitlines()
    assert tuple(header.split(",")) == FORWARDING_COLUMNS
    assert not math.isnan(float(row.split(",")[-1]))

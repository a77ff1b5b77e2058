import math

import numpy as np
import pytest

from hetqueue import sim
from hetqueue.model import SystemConfig


def test_config_checks(example):
    with pytest.raises(sim.InvalidHorizon):
        sim.SimConfig(example, horizon=0)
    with pytest.raises(ValueError):
        sim.SimConfig(example, warmup_fraction=1.0)
    with pytest.raises(ValueError):
        sim.SimConfig(example, batches=1)


def test_deterministic(example):
    c = sim.SimConfig(example, horizon=2e4, seed=42)
    assert sim.simulate(c) == sim.simulate(c)
    other = sim.simulate(sim.SimConfig(example, horizon=2e4, seed=43))
    assert other != sim.simulate(c)


def test_mm1():
    est = sim.simulate(sim.SimConfig(SystemConfig(0.5, (1.0,)), horizon=1e6, seed=1))
    assert est.busy_fraction[0].covers(0.5)
    assert est.reliable


def test_example_covers_closed_form(example):
    est = sim.simulate(sim.SimConfig(example, horizon=1e6, seed=2))
    assert est.busy_fraction[0].covers(5 / 17)
    assert est.busy_fraction[1].covers(7 / 17)
    rate = sum(e.mean for e in est.effective_rate)
    width = math.hypot(*(e.half_width for e in est.effective_rate))
    assert abs(rate - 1.0) < 2 * width
    # theorem at simulation scale
    assert est.busy_fraction[0].mean < est.busy_fraction[1].mean
    assert est.effective_rate[0].mean > est.effective_rate[1].mean


def test_littles_law(example):
    est = sim.simulate(sim.SimConfig(example, horizon=5e5, seed=9))
    gap = abs(est.mean_customers.mean - example.lam * est.mean_sojourn.mean)
    assert gap < est.mean_customers.half_width + example.lam * est.mean_sojourn.half_width


def test_valid_ranges():
    config = SystemConfig(2.5, (2.0, 1.0, 0.25))
    est = sim.simulate(sim.SimConfig(config, horizon=1e5, seed=4))
    for e in est.busy_fraction:
        assert 0 <= e.mean <= 1 and e.half_width >= 0
    assert est.mean_queue.mean >= 0
    assert est.event_count >= est.measured_events > 0


def test_three_servers_agree_with_closed_form():
    config = SystemConfig(2.5, (2.0, 1.0, 0.25))
    est = sim.simulate(sim.SimConfig(config, horizon=3e5, seed=6))
    ref = sim.reference_values(config)
    for key, e in est.named().items():
        # 4 half-widths keeps the chance of a spurious failure negligible
        assert abs(e.mean - ref[key]) < 4 * e.half_width, key


def test_short_run_flagged(example):
    est = sim.simulate(sim.SimConfig(example, horizon=20, seed=0))
    assert not est.reliable


def test_queue_growth_past_initial_buffer():
    # heavy traffic forces the waiting line past its initial capacity
    config = SystemConfig(0.999, (0.5, 0.5))
    est = sim.simulate(sim.SimConfig(config, horizon=2e5, seed=3))
    assert est.mean_queue.mean > 10


def test_replicate_seeds_distinct(example):
    rep = sim.replicate(sim.SimConfig(example, horizon=1e4, seed=5), 3)
    assert len({r.busy_fraction[0].mean for r in rep.runs}) == 3
    again = sim.replicate(sim.SimConfig(example, horizon=1e4, seed=5), 3)
    assert rep.runs == again.runs


def test_replicate_threads_match_serial(example):
    c = sim.SimConfig(example, horizon=1e4, seed=5)
    assert sim.replicate(c, 4, workers=2).runs == sim.replicate(c, 4).runs


def test_wrong_target_has_low_coverage(example):
    ref = sim.reference_values(example)
    wrong = {k: v + 0.1 for k, v in ref.items()}
    rep = sim.replicate(sim.SimConfig(example, horizon=1e5, seed=11), 20, targets=wrong)
    assert rep.coverage["busy[0]"] == 0.0
    assert rep.coverage["busy[1]"] == 0.0


def test_replicate_needs_two(example):
    with pytest.raises(ValueError):
        sim.replicate(sim.SimConfig(example, horizon=1e3), 1)

from __future__ import annotations

import pytest

from lsmstall.kernel import ArrivalProcess, Simulator, measure_windows, run_sim
from lsmstall.latency import Curve
from lsmstall.model import SimParams
from lsmstall.policies import PolicyConfig
from lsmstall.schedulers import SchedulerConfig

SMALL = SimParams(mem_component_size=1000, bandwidth=10_000.0, keyspace=100_000,
                  dataset_size=20_000)
TIERING = PolicyConfig(family="tiering", size_ratio=3)
LEVELING = PolicyConfig(family="leveling", size_ratio=4)


def test_piecewise_segments_extend_last_rate():
    a = ArrivalProcess("open_piecewise", segments=((5.0, 10.0), (5.0, 20.0)), duration=15.0)
    assert a.rate_segments() == [(0.0, 5.0, 10.0), (5.0, 10.0, 20.0), (10.0, 15.0, 20.0)]


def test_bursty_cycle():
    a = ArrivalProcess("open_bursty", base_rate=1.0, base_duration=2.0, burst_rate=5.0,
                       burst_duration=1.0, duration=5.0)
    assert a.rate_segments() == [(0.0, 2.0, 1.0), (2.0, 3.0, 5.0), (3.0, 5.0, 1.0)]


def test_measure_windows_drops_partial_tail():
    c = Curve.from_rates([(0.0, 70.0, 10.0)])
    assert measure_windows(c, 0.0, 70.0, 30.0) == [(0.0, 10.0), (30.0, 10.0)]


def test_bulk_load_settles_and_rebases_clock():
    sim = Simulator(SMALL, TIERING, SchedulerConfig())
    sim.bulk_load()
    assert sim.now == 0.0
    assert not sim.tree.in_flight
    stored = sum(c.logical_writes for c in sim.tree.components())
    assert stored == pytest.approx(20_000)


@pytest.mark.parametrize("policy", [TIERING, LEVELING])
@pytest.mark.parametrize("kind", ["fair", "greedy", "single_threaded"])
def test_closed_run_bounded_by_bandwidth(policy, kind):
    trace = run_sim(SMALL, policy, SchedulerConfig(kind=kind),
                    ArrivalProcess("closed", duration=100.0))
    rate = trace.processed() / trace.duration
    assert 0 < rate < SMALL.bandwidth
    assert all(s.cause == "component_constraint" for s in trace.stalls)


def test_light_open_load_never_stalls():
    trace = run_sim(SMALL, TIERING, SchedulerConfig(), ArrivalProcess("open_constant", rate=50.0,
                                                                       duration=100.0))
    assert trace.stalls == []
    assert trace.processed() == pytest.approx(5000.0)
    assert trace.latency.max() == 0.0


def test_rate_limit_caps_admission():
    sched = SchedulerConfig(write_interaction="rate_limit", max_rate=100.0)
    trace = run_sim(SMALL, TIERING, sched, ArrivalProcess("open_constant", rate=200.0,
                                                           duration=50.0))
    assert trace.processed() == pytest.approx(5000.0, rel=1e-6)
    assert trace.queue_growing


def test_runs_are_deterministic():
    def once():
        t = run_sim(SMALL, LEVELING, SchedulerConfig(kind="greedy"),
                    ArrivalProcess("closed", duration=60.0))
        return t.to_json()
    assert once() == once()


def test_clone_is_independent():
    sim = Simulator(SMALL, TIERING, SchedulerConfig())
    sim.bulk_load()
    before = sim.tree.level_counts()
    sim.clone().run(ArrivalProcess("closed", duration=30.0))
    assert sim.tree.level_counts() == before

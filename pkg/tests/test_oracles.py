from __future__ import annotations

from fractions import Fraction

import pytest

from lsmstall import checks
from lsmstall.latency import Curve
from lsmstall.oracles import (
    OracleLimitError,
    brute_force_curves,
    fair_completions,
    greedy_completions,
    greedy_curve,
    mc_distinct,
    tradeoff_instance,
    write_arrival_times,
)


def test_greedy_completions_smallest_first():
    assert greedy_completions([3, 1, 2], 1) == [1, 3, 6]


def test_fair_completions_even_split():
    assert fair_completions([1, 3], 2) == [Fraction(1), Fraction(2)]


def test_enumeration_contains_greedy_and_fair():
    curves = brute_force_curves([2, 1, 3], 1)
    assert greedy_curve([2, 1, 3], 1) in curves
    fair = fair_completions([2, 1, 3], 1)
    assert any(list(c.completions) == sorted(fair) for c in curves)


def test_greedy_dominates_static_sets():
    for ms in ([1, 1], [2, 5, 3], [4, 4, 1, 2]):
        g = greedy_curve(ms, 1)
        assert all(g.dominated_by(c) for c in brute_force_curves(ms, 1))


def test_counterexample_tradeoff():
    merges, successors, B = tradeoff_instance()
    pairs = {c.completions[:2] for c in brute_force_curves(merges, B, successors)}
    assert (Fraction(3), Fraction(8)) in pairs
    assert (Fraction(5), Fraction(6)) in pairs
    assert not any(a <= 3 and b <= 6 for a, b in pairs)


def test_size_limit():
    with pytest.raises(OracleLimitError):
        brute_force_curves([1] * 7, 1)


def test_mc_needs_enough_trials():
    with pytest.raises(ValueError):
        mc_distinct(5, 10, trials=100)


def test_mc_saturated_interval_nonzero():
    mean, hw = mc_distinct(5000, 3, "uniform", trials=10_000)
    assert mean == 3.0 and hw > 0


def test_arrival_midpoints():
    t = write_arrival_times(Curve.from_rates([(0.0, 2.0, 2.0)]))
    assert list(t) == [0.25, 0.75, 1.25, 1.75]


def test_quick_property_suite_runs():
    names = [r.name for r in checks.property_suite(quick=True)[1:]]
    assert len(names) == 4


def test_checks_report_lines():
    r = checks.greedy_counterexample()
    assert r.passed and r.line().startswith("PASS ")
    assert checks.queue_agreement(schedules=5).passed

"""Property suites comparing the analytic code against the oracles.

Each check returns a ``CheckResult``; the ``verify`` command and the
acceptance tests both run them.  All randomness comes from the ``seed``
argument.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .harness import HarnessParams, testing_phase
from .kernel import ArrivalProcess, Simulator
from .latency import Curve, queue_account
from .model import SimParams, draws_distinct, union_distinct, zipf_distinct
from .oracles import (
    all_multisets,
    brute_force_curves,
    greedy_curve,
    mc_distinct,
    per_write_reference,
    tradeoff_instance,
)
from .policies import PolicyConfig
from .schedulers import SchedulerConfig


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


# small tree used for the randomized latency-dominance runs
SMALL_TREE = SimParams(mem_component_size=1000, bandwidth=10_000.0,
                       keyspace=100_000, dataset_size=20_000)
SMALL_POLICIES = (PolicyConfig(family="tiering", size_ratio=3.0),
                  PolicyConfig(family="leveling", size_ratio=4.0))
SCHEDULERS = ("fair", "greedy", "single_threaded")
RATE_LIMITS = (0.5, 1.0, 2.0)  # multiples of the measured W


def curve_shortfall(fast: Curve, slow: Curve) -> float:
    """Largest amount by which ``fast`` trails ``slow`` (0 when it never does).

    Both curves are piecewise linear, so checking every breakpoint of
    either covers every write.
    """
    worst = 0.0
    for t in sorted(set(fast.times) | set(slow.times)):
        worst = max(worst, slow.at(t) - fast.at(t), slow.at(t, left=True) - fast.at(t, left=True))
    return worst


def latency_dominance(traces: int = 100, seed: int = 0, duration: float = 200.0,
                      segments: int = 6, tol: float = 1e-6) -> CheckResult:
    """Admitting writes as fast as possible never delays any write.

    Each trace is a piecewise-constant arrival stream whose rates lie below
    the configuration's measured throughput.  For every scheduler the
    unthrottled run is compared with rate limits at 0.5, 1 and 2 times W.
    """
    rng = np.random.default_rng(seed)
    harness = HarnessParams(test_duration=600.0, warmup=100.0)
    W = {}
    for policy in SMALL_POLICIES:
        for kind in SCHEDULERS:
            W[policy.family, kind] = testing_phase(
                SMALL_TREE, policy, SchedulerConfig(kind=kind), harness).measured_W
    loaded = {}
    for policy in SMALL_POLICIES:
        for kind in SCHEDULERS:
            sim = Simulator(SMALL_TREE, policy, SchedulerConfig(kind=kind))
            sim.bulk_load()
            loaded[policy.family, kind] = sim
    comparisons = violations = 0
    worst = 0.0
    where: dict[str, int] = {}
    for i in range(traces):
        policy = SMALL_POLICIES[i % len(SMALL_POLICIES)]
        fractions = rng.uniform(0.1, 0.9, segments)
        lengths = rng.uniform(5.0, 40.0, segments)
        for kind in SCHEDULERS:
            w = W[policy.family, kind]
            arrivals = ArrivalProcess(
                "open_piecewise", duration=duration,
                segments=tuple((float(d), float(f * w)) for d, f in zip(lengths, fractions)))
            base = loaded[policy.family, kind]
            fast = base.clone().run(arrivals)
            for mult in RATE_LIMITS:
                limited = SchedulerConfig(kind=kind, write_interaction="rate_limit",
                                          max_rate=mult * w)
                slow = base.clone().with_config(sched=limited).run(arrivals)
                gap = curve_shortfall(fast.admissions, slow.admissions)
                comparisons += 1
                if gap > tol:
                    violations += 1
                    worst = max(worst, gap)
                    key = f"{policy.family}/{kind}"
                    where[key] = where.get(key, 0) + 1
    detail = f"{violations} violations in {comparisons} comparisons over {traces} traces"
    if violations:
        detail += f" (worst shortfall {worst:.1f} writes; " + ", ".join(
            f"{k}: {v}" for k, v in sorted(where.items())) + ")"
    return CheckResult("latency dominance of unthrottled writes", violations == 0, detail)


def greedy_static_optimality(max_count: int = 5, sizes=(1, 2, 3, 4, 5)) -> CheckResult:
    """Greedy's component-count curve lies below every enumerated schedule."""
    sets = violations = curves = 0
    missing = 0
    for ms in all_multisets(max_count, sizes):
        enumerated = brute_force_curves(ms, 1)
        g = greedy_curve(ms, 1)
        sets += 1
        curves += len(enumerated)
        if g not in enumerated:
            missing += 1
        violations += sum(1 for c in enumerated if not g.dominated_by(c))
    ok = violations == 0 and missing == 0
    return CheckResult("greedy optimality on static merge sets", ok,
                       f"{violations} violations across {sets} multisets "
                       f"({curves} curves); greedy curve missing from {missing}")


def greedy_counterexample() -> CheckResult:
    """With merges created on completion, no schedule is best at every instant."""
    merges, successors, B = tradeoff_instance()
    curves = brute_force_curves(merges, B, successors)
    first = min(c.completions[0] for c in curves)
    second = min(c.completions[1] for c in curves)
    both = [c for c in curves if c.completions[0] <= first and c.completions[1] <= second]
    by_first = {c.completions[:2] for c in curves if c.completions[0] == first}
    by_second = {c.completions[:2] for c in curves if c.completions[1] == second}
    ok = first == Fraction(3) and second == Fraction(6) and not both
    detail = (f"best first completion {first}, best second {second}; schedules reaching the "
              f"first: {sorted(tuple(map(str, x)) for x in by_first)}, reaching the second: "
              f"{sorted(tuple(map(str, x)) for x in by_second)}; achieving both: {len(both)}")
    return CheckResult("no schedule minimizes components at all times", ok, detail)


def dedup_agreement(points: int = 20, seed: int = 0, trials: int = 10_000) -> CheckResult:
    """Closed-form distinct counts against Monte-Carlo estimates."""
    rng = np.random.default_rng(seed)
    failures = []
    for i in range(points):
        U = int(rng.integers(2, 2001))
        n = int(rng.integers(1, 1001))
        mean, hw = mc_distinct(n, U, "uniform", seed=seed * 1000 + i, trials=trials)
        got = draws_distinct(n, U)
        if abs(got - mean) > hw:
            failures.append(f"uniform n={n} U={U}: {got:.3f} vs {mean:.3f}±{hw:.3f}")
    for i in range(points):
        U = int(rng.integers(2, 2001))
        n = int(rng.integers(1, 1001))
        s = float(rng.uniform(0.5, 1.2))
        mean, hw = mc_distinct(n, U, "zipf", seed=seed * 1000 + 100 + i, trials=trials, s=s)
        got = zipf_distinct(n, U, s)
        if abs(got - mean) > hw:
            failures.append(f"zipf n={n} U={U} s={s:.3f}: {got:.3f} vs {mean:.3f}±{hw:.3f}")
    for i in range(points):
        U = int(rng.integers(20, 501))
        k = int(rng.integers(2, 6))
        sizes = [int(x) for x in rng.integers(1, U + 1, k)]
        mean, hw = mc_distinct(sizes, U, "union", seed=seed * 1000 + 200 + i, trials=trials)
        got = union_distinct(sizes, U)
        if abs(got - mean) > hw:
            failures.append(f"union sizes={sizes} U={U}: {got:.3f} vs {mean:.3f}±{hw:.3f}")
    detail = f"{3 * points - len(failures)}/{3 * points} points inside the 99% interval"
    if failures:
        detail += "; outside: " + "; ".join(failures)
    return CheckResult("distinct-count formulas match sampling", not failures, detail)


def random_stalls(rng: np.random.Generator, duration: float) -> list[tuple[float, float]]:
    out = []
    for _ in range(int(rng.integers(1, 6))):
        s = float(rng.uniform(0.0, duration))
        out.append((s, min(s + float(rng.exponential(3.0)), duration + 5.0)))
    return sorted(out)


def queue_agreement(schedules: int = 50, seed: int = 0, tol: float = 1e-9) -> CheckResult:
    """Analytic queue latencies against a write-by-write reference."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(schedules):
        duration = float(rng.uniform(20.0, 60.0))
        lam = float(rng.uniform(50.0, 2000.0))
        stalls = random_stalls(rng, duration)
        arrivals = Curve.from_rates([(0.0, duration, lam)])
        dist = queue_account(arrivals, stalls)
        times, ref = per_write_reference(arrivals, stalls)
        got = dist.latency_at(times)
        worst = max(worst, float(np.max(np.abs(got - ref))))
        # aligned order statistics
        qs = np.sort(got) - np.sort(ref)
        worst = max(worst, float(np.max(np.abs(qs))))
    # a 1 s stall under 1000 writes/s: writes arriving in it wait 0.5 s on average
    example = Curve.from_rates([(0.0, 10.0, 1000.0)])
    mean_stalled = queue_account(example, [(2.0, 3.0)]).mean(arrival_window=(2.0, 3.0))
    times, ref = per_write_reference(example, [(2.0, 3.0)])
    inside = (times >= 2.0) & (times < 3.0)
    ref_mean = float(ref[inside].mean())
    ok = worst < tol and mean_stalled == 0.5 and abs(ref_mean - 0.5) < 1e-12
    detail = (f"max per-write difference {worst:.3g}s over {schedules} schedules; "
              f"1s stall at 1000/s: analytic mean {mean_stalled!r}s, per-write mean {ref_mean!r}s")
    return CheckResult("queue accounting matches per-write queuing", ok, detail)


def property_suite(seed: int = 0, quick: bool = False) -> list[CheckResult]:
    """Every property check, in a fixed order."""
    return [
        latency_dominance(traces=10 if quick else 100, seed=seed),
        greedy_static_optimality(max_count=3 if quick else 5),
        greedy_counterexample(),
        dedup_agreement(points=5 if quick else 20, seed=seed),
        queue_agreement(schedules=10 if quick else 50, seed=seed),
    ]

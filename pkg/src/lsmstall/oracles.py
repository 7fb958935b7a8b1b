"""Independent reference implementations used to check the analytic code.

* ``brute_force_curves`` enumerates merge schedules exactly (rational
  arithmetic) to test scheduler optimality claims.
* ``mc_distinct`` estimates distinct-key counts by sampling.
* ``per_write_reference`` queues writes one at a time against a stall
  schedule.
"""

from __future__ import annotations

import bisect
import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np
from scipy import stats

from .latency import Curve, merge_intervals

MAX_MERGES = 6
UNIFORM_GRID = 64
MAX_REFERENCE_WRITES = 1_000_000


class OracleLimitError(ValueError):
    """The requested instance is too large for exhaustive treatment."""


@dataclass(frozen=True)
class ScheduleCurve:
    """Component count over time as (time, count) breakpoints."""
    breakpoints: tuple[tuple[Fraction, int], ...]

    @property
    def completions(self) -> tuple[Fraction, ...]:
        return tuple(t for t, _ in self.breakpoints[1:])

    def count_at(self, t: Fraction) -> int:
        """Right-continuous component count at ``t``."""
        n = self.breakpoints[0][1]
        for when, count in self.breakpoints[1:]:
            if when <= t:
                n = count
        return n

    def dominated_by(self, other: "ScheduleCurve") -> bool:
        """True when this curve is pointwise <= ``other``."""
        mine, theirs = self.completions, other.completions
        if len(mine) < len(theirs):
            return False
        return all(a <= b for a, b in zip(mine, theirs))


def _curve(times: Sequence[Fraction], start: int) -> ScheduleCurve:
    pts = [(Fraction(0), start)]
    for i, t in enumerate(sorted(times), start=1):
        pts.append((t, start - i))
    return ScheduleCurve(tuple(pts))


def _grid(sizes: Sequence[int], spawned: Sequence[int]) -> tuple[int, ...]:
    """Switch points in scaled work units (work * UNIFORM_GRID)."""
    allsizes = list(sizes) + list(spawned)
    total = sum(allsizes)
    sums = {0}
    for s in allsizes:
        sums |= {x + s for x in sums}
    points = {x * UNIFORM_GRID for x in sums} | {k * total for k in range(UNIFORM_GRID + 1)}
    return tuple(sorted(p for p in points if 0 < p < total * UNIFORM_GRID))


def brute_force_curves(merges: Sequence[int], B: int | Fraction,
                       successors: Mapping[int, int] | None = None,
                       grid: Sequence[Fraction] | None = None,
                       preemptions: int = 1) -> set[ScheduleCurve]:
    """Every component-count curve reachable by the enumerated schedules.

    ``merges`` are integer work amounts.  ``successors`` maps a merge index
    to the work of a merge created when it completes.  Schedules run one
    merge at a time at full bandwidth in any order, may switch at most
    ``preemptions`` times at a grid point (default grid: every sum of a
    subset of sizes plus 64 uniform points), and the even-split schedule is
    included as well.  Each completion removes one component.
    """
    if len(merges) > MAX_MERGES:
        raise OracleLimitError(f"at most {MAX_MERGES} merges, got {len(merges)}")
    if any(int(m) != m or m <= 0 for m in merges):
        raise ValueError("merge sizes must be positive integers")
    successors = dict(successors or {})
    B = Fraction(B)
    scale = UNIFORM_GRID
    start = len(merges) + len(successors)
    if grid is None:
        points = _grid(merges, list(successors.values()))
    else:
        points = tuple(sorted(int(Fraction(g) * B * scale) for g in grid))

    # jobs are (index, remaining scaled work); a finished job may spawn its successor
    spawn_ids = {i: len(merges) + k for k, i in enumerate(sorted(successors))}

    @lru_cache(maxsize=None)
    def explore(now: int, jobs: tuple[tuple[int, int], ...], budget: int) -> frozenset:
        if not jobs:
            return frozenset({()})
        out = set()
        for pos, (jid, rem) in enumerate(jobs):
            rest = jobs[:pos] + jobs[pos + 1:]
            # run to completion
            done = now + rem
            nxt = rest
            if jid in successors:
                nxt = tuple(sorted(rest + ((spawn_ids[jid], successors[jid] * scale),)))
            for tail in explore(done, nxt, budget):
                out.add((done,) + tail)
            if budget <= 0:
                continue
            # switch at a grid point strictly inside this run
            lo = bisect.bisect_right(points, now)
            hi = bisect.bisect_left(points, done)
            for g in points[lo:hi]:
                left = tuple(sorted(rest + ((jid, rem - (g - now)),)))
                for tail in explore(g, left, budget - 1):
                    out.add(tail)
        return frozenset(out)

    jobs0 = tuple(sorted((i, int(m) * scale) for i, m in enumerate(merges)))
    curves = set()
    for times in explore(0, jobs0, preemptions):
        curves.add(_curve([Fraction(t, scale) / B for t in times], start))
    curves.add(_curve(fair_completions(merges, B, successors), start))
    return curves


def fair_completions(merges: Sequence[int], B: Fraction | int,
                     successors: Mapping[int, int] | None = None) -> list[Fraction]:
    """Completion times when live merges split the bandwidth evenly."""
    successors = dict(successors or {})
    B = Fraction(B)
    live = {i: Fraction(m) for i, m in enumerate(merges)}
    next_id = len(merges)
    now = Fraction(0)
    out = []
    while live:
        share = B / len(live)
        jid = min(live, key=lambda j: (live[j], j))
        dt = live[jid] / share
        now += dt
        for j in live:
            live[j] -= share * dt
        for j in [j for j, r in live.items() if r == 0]:
            del live[j]
            out.append(now)
            if j in successors:
                live[next_id] = Fraction(successors[j])
                next_id += 1
    return out


def greedy_completions(merges: Sequence[int], B: Fraction | int,
                       successors: Mapping[int, int] | None = None) -> list[Fraction]:
    """Completion times when the smallest remaining merge always runs."""
    successors = dict(successors or {})
    B = Fraction(B)
    live = [(Fraction(m), i) for i, m in enumerate(merges)]
    next_id = len(merges)
    now = Fraction(0)
    out = []
    while live:
        live.sort()
        rem, jid = live.pop(0)
        now += rem / B
        out.append(now)
        if jid in successors:
            live.append((Fraction(successors[jid]), next_id))
            next_id += 1
    return out


def greedy_curve(merges: Sequence[int], B, successors=None) -> ScheduleCurve:
    return _curve(greedy_completions(merges, B, successors),
                  len(merges) + len(successors or {}))


# ---------------------------------------------------------------------------
# Monte-Carlo distinct counts
# ---------------------------------------------------------------------------


def _distinct_rows(draws: np.ndarray) -> np.ndarray:
    if draws.shape[1] == 0:
        return np.zeros(draws.shape[0])
    s = np.sort(draws, axis=1)
    return 1 + np.count_nonzero(np.diff(s, axis=1), axis=1)


def mc_distinct(n, U: int, dist: str = "uniform", seed: int = 0,
                trials: int = 10_000, s: float = 0.99,
                batch: int = 2_000) -> tuple[float, float]:
    """Sampled mean distinct count and its 99% confidence half-width.

    ``dist`` is ``uniform`` or ``zipf`` (``n`` draws over keys 1..U), or
    ``union`` (``n`` is a list of subset sizes, each subset drawn uniformly
    without replacement).
    """
    if trials < 10_000:
        raise ValueError("mc_distinct needs at least 10^4 trials")
    rng = np.random.default_rng(seed)
    if dist == "union":
        sizes = [int(d) for d in n]
        if any(d < 0 or d > U for d in sizes):
            raise ValueError("subset sizes must lie in [0, U]")
        if not sizes or max(sizes) == 0:
            return 0.0, 0.0
    else:
        n = int(n)
        if n == 0:
            return 0.0, 0.0
        if n == 1:
            return 1.0, 0.0
        if dist == "zipf":
            p = np.arange(1, U + 1, dtype=float) ** -s
            cdf = np.cumsum(p / p.sum())
            cdf[-1] = 1.0
        elif dist != "uniform":
            raise ValueError(f"unknown distribution {dist!r}")
    values = []
    left = trials
    while left > 0:
        m = min(batch, left)
        left -= m
        if dist == "uniform":
            values.append(_distinct_rows(rng.integers(0, U, size=(m, n))))
        elif dist == "zipf":
            u = rng.random((m, n))
            values.append(_distinct_rows(np.searchsorted(cdf, u, side="right")))
        else:
            covered = np.zeros((m, U), dtype=bool)
            rows = np.arange(m)[:, None]
            for d in sizes:
                if d == 0:
                    continue
                keys = np.argpartition(rng.random((m, U)), d - 1, axis=1)[:, :d]
                covered[rows, keys] = True
            values.append(covered.sum(axis=1).astype(float))
    v = np.concatenate(values).astype(float)
    z = stats.norm.ppf(0.995)
    hw = z * v.std(ddof=1) / math.sqrt(len(v))
    if hw == 0.0:
        # every trial agreed (e.g. all keys always hit): the sample variance
        # says nothing, so fall back to the zero-event bound ln(100)/trials
        hw = math.log(100.0) / len(v)
    return float(v.mean()), float(hw)


# ---------------------------------------------------------------------------
# Per-write queue reference
# ---------------------------------------------------------------------------


def write_arrival_times(arrivals: Curve) -> np.ndarray:
    """Arrival time of each whole write: write k arrives when A reaches k + 1/2."""
    total = int(math.floor(arrivals.final + 1e-9))
    if total > MAX_REFERENCE_WRITES:
        raise OracleLimitError(f"at most {MAX_REFERENCE_WRITES} writes, got {total}")
    out = np.empty(total)
    pieces = arrivals.pieces()
    j = 0
    for k in range(total):
        x = k + 0.5
        while pieces[j][1] < x:
            j += 1
        c0, c1, t0, t1 = pieces[j]
        out[k] = t0 + (t1 - t0) * (x - c0) / (c1 - c0)
    return out


def per_write_reference(arrivals: Curve,
                        stall_intervals: Sequence[tuple[float, float]]) -> tuple[np.ndarray, np.ndarray]:
    """(arrival times, latencies) with each write queued on its own.

    A write arriving inside a stall waits for its end; chained stalls are
    merged.  Admission is otherwise instantaneous.
    """
    times = write_arrival_times(arrivals)
    stalls = merge_intervals(stall_intervals)
    lat = np.zeros(len(times))
    j = 0
    for k, t in enumerate(times):
        while j < len(stalls) and stalls[j][1] <= t:
            j += 1
        if j < len(stalls) and stalls[j][0] <= t < stalls[j][1]:
            lat[k] = stalls[j][1] - t
    return times, lat


def tradeoff_instance() -> tuple[list[int], dict[int, int], int]:
    """Merges where finishing one creates another.

    Two merges of 300 and 500 units start together; finishing the
    500-unit merge creates a 100-unit one, and B = 100 units/s.  Returns
    (initial merges, successors {index: size of the created merge}, B).
    """
    return [300, 500], {1: 100}, 100


def all_multisets(max_count: int = 5, sizes: Sequence[int] = (1, 2, 3, 4, 5)):
    for n in range(1, max_count + 1):
        yield from itertools.combinations_with_replacement(sizes, n)

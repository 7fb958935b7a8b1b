"""Exact write-latency accounting from cumulative arrival and admission curves.

Writes are a fluid: write ``x`` is the x-th unit of cumulative arrivals.
Under FIFO it arrives at ``A^-1(x)`` and is admitted at ``D^-1(x)``, so its
latency is piecewise linear in ``x`` and the distribution over all writes can
be assembled exactly, without sampling.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

# latencies below this are rounding noise, not queuing
QUEUED_EPS = 1e-9


@dataclass
class Curve:
    """Nondecreasing cumulative count over time.

    Knots are linearly interpolated; two knots at the same time encode a
    jump.
    """

    times: list[float] = field(default_factory=list)
    values: list[float] = field(default_factory=list)

    def append(self, t: float, v: float) -> None:
        if self.times and t == self.times[-1] and v == self.values[-1]:
            return
        if (len(self.times) >= 2 and self.values[-1] == self.values[-2] == v
                and self.times[-1] > self.times[-2]):
            # extend a flat stretch instead of adding a knot
            self.times[-1] = t
            return
        self.times.append(t)
        self.values.append(v)

    @property
    def final(self) -> float:
        return self.values[-1] if self.values else 0.0

    def at(self, t: float, left: bool = False) -> float:
        """Value at ``t``; ``left`` gives the limit from below at a jump."""
        if not self.times:
            return 0.0
        k = (bisect.bisect_left if left else bisect.bisect_right)(self.times, t)
        if k == 0:
            return self.values[0]
        if k == len(self.times):
            return self.values[-1]
        t0, t1 = self.times[k - 1], self.times[k]
        v0, v1 = self.values[k - 1], self.values[k]
        return v0 + (v1 - v0) * (t - t0) / (t1 - t0)

    def pieces(self) -> list[tuple[float, float, float, float]]:
        """Rising pieces as (c0, c1, t0, t1); flat stretches are skipped."""
        out = []
        for k in range(len(self.times) - 1):
            c0, c1 = self.values[k], self.values[k + 1]
            if c1 > c0:
                out.append((c0, c1, self.times[k], self.times[k + 1]))
        return out

    @classmethod
    def from_rates(cls, segments: Iterable[tuple[float, float, float]]) -> "Curve":
        """Cumulative curve of back-to-back (start, end, rate) segments."""
        c = cls()
        total = 0.0
        for t0, t1, rate in segments:
            c.append(t0, total)
            total += rate * (t1 - t0)
            c.append(t1, total)
        return c


def _inv(piece: tuple[float, float, float, float], x: float) -> float:
    c0, c1, t0, t1 = piece
    if t1 == t0:
        return t0
    return t0 + (t1 - t0) * (x - c0) / (c1 - c0)


@dataclass
class LatencyDistribution:
    """Latency of every write, as linear segments over write index.

    Segment ``k`` covers ``mass[k]`` writes arriving uniformly in
    ``[arr0[k], arr1[k]]`` whose latency runs linearly from ``lat0[k]`` to
    ``lat1[k]``; ``proc[k]`` is their processing latency.
    """

    mass: np.ndarray
    arr0: np.ndarray
    arr1: np.ndarray
    lat0: np.ndarray
    lat1: np.ndarray
    proc: np.ndarray

    @classmethod
    def empty(cls) -> "LatencyDistribution":
        z = np.zeros(0)
        return cls(z, z, z, z, z, z)

    @property
    def count(self) -> float:
        return float(self.mass.sum())

    def quantile(self, q: float, processing: bool = False) -> float:
        if processing:
            return _quantile(self.mass, self.proc, self.proc, q)
        return _quantile(self.mass, self.lat0, self.lat1, q)

    def max(self, processing: bool = False) -> float:
        return self.quantile(1.0, processing)

    def mean(self, arrival_window: tuple[float, float] | None = None) -> float:
        mass, l0, l1 = self.mass, self.lat0, self.lat1
        if arrival_window is not None:
            lo, hi = arrival_window
            span = np.where(self.arr1 > self.arr0, self.arr1 - self.arr0, 1.0)
            f0 = np.clip((lo - self.arr0) / span, 0.0, 1.0)
            f1 = np.clip((hi - self.arr0) / span, 0.0, 1.0)
            point = self.arr1 == self.arr0
            inside = (self.arr0 >= lo) & (self.arr0 < hi)
            f0 = np.where(point, 0.0, f0)
            f1 = np.where(point, inside.astype(float), f1)
            a, b = l0 + (l1 - l0) * f0, l0 + (l1 - l0) * f1
            mass = mass * (f1 - f0)
            l0, l1 = a, b
        total = mass.sum()
        if total <= 0:
            return 0.0
        return float((mass * (l0 + l1) / 2).sum() / total)

    def latency_at(self, arrival_times: Sequence[float]) -> np.ndarray:
        """Latency of the writes arriving at the given times."""
        t = np.asarray(arrival_times, dtype=float)
        k = np.searchsorted(self.arr0, t, side="right") - 1
        k = np.clip(k, 0, len(self.arr0) - 1)
        a0, a1 = self.arr0[k], self.arr1[k]
        span = np.where(a1 > a0, a1 - a0, 1.0)
        f = np.clip((t - a0) / span, 0.0, 1.0)
        return self.lat0[k] + (self.lat1[k] - self.lat0[k]) * f

    def summary(self) -> dict[str, float]:
        return {
            "p50": self.quantile(0.50),
            "p99": self.quantile(0.99),
            "p999": self.quantile(0.999),
            "max": self.max(),
            "processing_p50": self.quantile(0.50, True),
            "processing_p99": self.quantile(0.99, True),
            "processing_p999": self.quantile(0.999, True),
            "processing_max": self.max(True),
        }


def _quantile(mass: np.ndarray, l0: np.ndarray, l1: np.ndarray, q: float) -> float:
    """Exact quantile of a mixture of uniform ramps and point masses.

    The CDF is evaluated term by term (each term is a clipped fraction of
    one segment's mass), so very steep ramps cannot cancel numerically.
    """
    keep = mass > 0
    mass, l0, l1 = mass[keep], l0[keep], l1[keep]
    if mass.size == 0:
        return 0.0
    lo, hi = np.minimum(l0, l1), np.maximum(l0, l1)
    ramp = hi > lo
    width = np.where(ramp, hi - lo, 1.0)
    target = q * mass.sum()

    def cdf(x: float, closed: bool = True) -> float:
        frac = np.clip((x - lo) / width, 0.0, 1.0)
        at = (lo <= x) if closed else (lo < x)
        return float(np.dot(mass, np.where(ramp, frac, at)))

    knots = np.unique(np.concatenate([lo, hi]))
    goal = target * (1 - 1e-12)
    a, b = 0, knots.size - 1
    if cdf(knots[0]) >= goal:
        return float(knots[0])
    # smallest knot whose CDF reaches the target
    while b - a > 1:
        mid = (a + b) // 2
        if cdf(knots[mid]) >= goal:
            b = mid
        else:
            a = mid
    x0, x1 = float(knots[a]), float(knots[b])
    f0, f1 = cdf(x0), cdf(x1, closed=False)
    if f1 > f0 and target < f1:
        return x0 + (target - f0) / (f1 - f0) * (x1 - x0)
    return x1


def merge_intervals(intervals: Iterable[tuple[float, float]]) -> list[tuple[float, float]]:
    """Sorted union of half-open intervals; touching intervals are joined."""
    merged: list[list[float]] = []
    for s, e in sorted(intervals):
        if merged and s <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], e)
        else:
            merged.append([s, e])
    return [(s, e) for s, e in merged]


def stall_admissions(arrivals: Curve, stalls: Sequence[tuple[float, float]]) -> Curve:
    """Admission curve when writes wait out each stall and drain instantly at its end."""
    merged = merge_intervals(stalls)
    starts = [s for s, _ in merged]
    ends = {e: s for s, e in merged}
    knots = sorted(set(arrivals.times) | {p for iv in merged for p in iv})
    d = Curve()
    for t in knots:
        k = bisect.bisect_right(starts, t) - 1
        if k >= 0 and t < merged[k][1]:
            d.append(t, arrivals.at(merged[k][0]))
        elif t in ends:
            d.append(t, arrivals.at(ends[t]))
            d.append(t, arrivals.at(t))
        else:
            d.append(t, arrivals.at(t))
    return d


def queue_account(arrivals: Curve, stall_intervals: Sequence[tuple[float, float]] = (),
                  admissions: Curve | None = None) -> LatencyDistribution:
    """FIFO latency distribution of all admitted writes.

    Without an explicit admission curve, writes arriving in a stall are
    admitted at its end (back-to-back stalls chain).
    """
    if admissions is None:
        admissions = stall_admissions(arrivals, stall_intervals)
    ap, dp = arrivals.pieces(), admissions.pieces()
    limit = min(arrivals.final, admissions.final)
    rows = []
    i = j = 0
    x = 0.0
    while i < len(ap) and j < len(dp) and x < limit:
        a, d = ap[i], dp[j]
        xe = min(a[1], d[1], limit)
        if xe > x:
            ta0, ta1 = _inv(a, x), _inv(a, xe)
            td0, td1 = _inv(d, x), _inv(d, xe)
            l0, l1 = max(td0 - ta0, 0.0), max(td1 - ta1, 0.0)
            # rounding residue of the fluid arithmetic is not a wait
            l0 = 0.0 if l0 < QUEUED_EPS else l0
            l1 = 0.0 if l1 < QUEUED_EPS else l1
            proc = 0.0
            if d[3] > d[2] and (l0 + l1) / 2 > QUEUED_EPS:
                proc = (d[3] - d[2]) / (d[1] - d[0])
            rows.append((xe - x, ta0, ta1, l0, l1, proc))
            x = xe
        if a[1] <= x:
            i += 1
        if d[1] <= x:
            j += 1
    if not rows:
        return LatencyDistribution.empty()
    cols = np.array(rows, dtype=float).T
    return LatencyDistribution(*cols)

"""LSM structure types and the deduplication arithmetic behind component sizes.

Keys live on the continuous interval [0, 1).  A component does not track
individual keys; it records how many raw writes it absorbed and how many
distinct entries those writes leave behind.  Two kinds of content are kept
apart:

* ``loaded`` entries come from the bulk load.  Loaded keys are unique, so
  loaded content of different components never overlaps.
* ``updates`` is the number of update writes (uniform or Zipf keys).  Updates
  collide with each other and with loaded keys.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np
from scipy import integrate

FULL_INTERVAL = (0.0, 1.0)

MB = 1 << 20


class DomainError(ValueError):
    """An argument lies outside the domain of a size formula."""


@dataclass(frozen=True)
class SimParams:
    entry_size: int = 1024
    mem_component_size: int = 128 * MB // 1024
    mem_component_count: int = 2
    bandwidth: float = 100 * MB / 1024
    keyspace: int = 100_000_000
    key_distribution: str = "uniform"
    zipf_s: float = 0.99
    dataset_size: int = 100_000_000
    force_bytes: int = 16 * MB

    def validate(self) -> None:
        if self.mem_component_size <= 0:
            raise ValueError("sim.mem_component_size must be > 0")
        if self.bandwidth <= 0:
            raise ValueError("sim.bandwidth must be > 0")
        if self.keyspace <= 0:
            raise ValueError("sim.keyspace must be > 0")
        if self.mem_component_count < 1:
            raise ValueError("sim.mem_component_count must be >= 1")
        if self.entry_size <= 0:
            raise ValueError("sim.entry_size must be > 0")
        if self.dataset_size < 0:
            raise ValueError("sim.dataset_size must be >= 0")
        if self.key_distribution not in ("uniform", "zipf"):
            raise ValueError("sim.key_distribution must be uniform or zipf")
        if self.zipf_s < 0:
            raise ValueError("sim.zipf_s must be >= 0")


# ---------------------------------------------------------------------------
# Size formulas
# ---------------------------------------------------------------------------


def draws_distinct(n: float, K: float) -> float:
    """Expected distinct keys after ``n`` uniform draws from ``K`` keys."""
    if K <= 0:
        raise DomainError(f"keyspace must be positive, got {K}")
    if n < 0:
        raise DomainError(f"draw count must be >= 0, got {n}")
    if n == 0:
        return 0.0
    if K <= 1:
        # slivers of a key range: the continuous limit, capped at K
        return K * -math.expm1(-n / K)
    # -expm1(n*log1p(-1/K)) keeps precision when n/K is tiny
    return K * -math.expm1(n * math.log1p(-1.0 / K))


def union_distinct(sizes: Iterable[float], K: float) -> float:
    """Expected size of the union of independent uniform subsets of ``K`` keys."""
    if K <= 0:
        raise DomainError(f"keyspace must be positive, got {K}")
    log_miss = 0.0
    for d in sizes:
        if d < 0 or d > K * (1 + 1e-12):
            raise DomainError(f"subset size {d} outside [0, {K}]")
        frac = min(d / K, 1.0)
        if frac >= 1.0:
            return float(K)
        log_miss += math.log1p(-frac)
    return K * -math.expm1(log_miss)


def _zipf_norm(U: int, s: float) -> float:
    return _zipf_sum(lambda k: k ** -s, U)


_HEAD = 1 << 16


def _zipf_sum(f, U: int) -> float:
    """Sum f(k) for k in [1, U]; exact head, Euler-Maclaurin tail."""
    head_end = min(U, _HEAD)
    ks = np.arange(1, head_end + 1, dtype=np.float64)
    total = float(np.sum(f(ks)))
    if U > head_end:
        a, b = float(head_end + 1), float(U)
        # substitute k = exp(u) so the smooth tail integrates accurately
        integral, _ = integrate.quad(
            lambda u: float(f(math.exp(u))) * math.exp(u),
            math.log(a), math.log(b), limit=200, epsabs=0.0, epsrel=1e-12,
        )
        h = 1e-3
        deriv = lambda x: (float(f(x * (1 + h))) - float(f(x * (1 - h)))) / (2 * h * x)
        total += integral + 0.5 * (float(f(a)) + float(f(b))) + (deriv(b) - deriv(a)) / 12.0
    return total


@lru_cache(maxsize=4096)
def zipf_distinct(n: float, U: int, s: float) -> float:
    """Expected distinct keys after ``n`` Zipf(s) draws over keys 1..U."""
    if U < 1:
        raise DomainError(f"keyspace must be >= 1, got {U}")
    if n < 0 or s < 0:
        raise DomainError("n and s must be >= 0")
    if n == 0:
        return 0.0
    if s == 0:
        return draws_distinct(n, U)
    norm = _zipf_norm(U, s)

    def present(k):
        p = np.asarray(k, dtype=np.float64) ** -s / norm
        return -np.expm1(n * np.log1p(-p))

    if U <= _HEAD:
        return float(np.sum(present(np.arange(1, U + 1, dtype=np.float64))))
    return _zipf_sum(present, U)


# ---------------------------------------------------------------------------
# Structure
# ---------------------------------------------------------------------------


@dataclass
class DiskComponent:
    id: int
    level: int
    loaded: float
    updates: float
    size: float
    key_interval: tuple[float, float] = FULL_INTERVAL
    created_at: float = 0.0
    merging: bool = False

    @property
    def logical_writes(self) -> float:
        return self.loaded + self.updates

    @property
    def width(self) -> float:
        return self.key_interval[1] - self.key_interval[0]


@dataclass
class MergeTask:
    id: int
    inputs: tuple[int, ...]
    input_total: float
    remaining: float
    output_level: int
    output_interval: tuple[float, float]
    created_at: float
    source_level: int = 0

    def __post_init__(self) -> None:
        if not self.inputs:
            raise ValueError("merge task needs at least one input")


@dataclass
class TreeState:
    """Disk-side LSM structure.

    ``levels[i]`` is ordered oldest first for full-merge policies and by
    interval start for partitioned levels >= 1.
    """

    levels: list[list[DiskComponent]] = field(default_factory=lambda: [[]])
    partitioned: bool = False
    cursors: dict[int, float] = field(default_factory=dict)
    in_flight: dict[int, MergeTask] = field(default_factory=dict)
    next_component_id: int = 0
    next_task_id: int = 0
    # running per-level entry totals, kept in step with add/remove
    _sizes: dict[int, float] = field(default_factory=dict, repr=False, compare=False)

    def level_size(self, i: int) -> float:
        """Total entries stored at level ``i``."""
        if i >= len(self.levels) or not self.levels[i]:
            return 0.0
        if i not in self._sizes:
            self._sizes[i] = sum(c.size for c in self.levels[i])
        return self._sizes[i]

    def _grow(self, level: int, delta: float) -> None:
        if level in self._sizes:
            self._sizes[level] += delta

    def new_component_id(self) -> int:
        self.next_component_id += 1
        return self.next_component_id

    def new_task_id(self) -> int:
        self.next_task_id += 1
        return self.next_task_id

    def ensure_levels(self, n: int) -> None:
        while len(self.levels) < n:
            self.levels.append([])

    def total_components(self) -> int:
        return sum(len(level) for level in self.levels)

    def level_counts(self) -> list[int]:
        return [len(level) for level in self.levels]

    def components(self) -> Iterable[DiskComponent]:
        for level in self.levels:
            yield from level

    def by_id(self) -> dict[int, DiskComponent]:
        return {c.id: c for c in self.components()}

    def add(self, comp: DiskComponent) -> None:
        self.ensure_levels(comp.level + 1)
        self._grow(comp.level, comp.size)
        level = self.levels[comp.level]
        if self.partitioned and comp.level >= 1:
            at = bisect.bisect_left(level, comp.key_interval[0], key=_start)
            level.insert(at, comp)
        else:
            level.append(comp)

    def insert(self, comp: DiskComponent, index: int) -> None:
        """Place ``comp`` at a given position of its (unpartitioned) level."""
        self.ensure_levels(comp.level + 1)
        self._grow(comp.level, comp.size)
        self.levels[comp.level].insert(index, comp)

    def remove(self, ids: set[int], levels: Iterable[int] | None = None) -> list[DiskComponent]:
        """Drop components by id; ``levels`` limits the search when known."""
        removed = []
        for i in sorted(set(levels)) if levels is not None else range(len(self.levels)):
            level = self.levels[i]
            gone = [c for c in level if c.id in ids]
            if gone:
                removed.extend(gone)
                self.levels[i] = [c for c in level if c.id not in ids]
                self._sizes.pop(i, None)
        return removed

    def discard(self, comps: Iterable[DiskComponent]) -> None:
        """Remove the given components from their levels.

        Partitioned levels are searched by key, so this stays cheap when a
        level holds many small files.
        """
        for c in comps:
            level = self.levels[c.level]
            if self.partitioned and c.level >= 1:
                at = bisect.bisect_left(level, c.key_interval[0], key=_start)
                while level[at] is not c:
                    at += 1
            else:
                at = next(k for k, x in enumerate(level) if x is c)
            del level[at]
            if level:
                self._grow(c.level, -c.size)
            else:
                self._sizes.pop(c.level, None)


def _start(comp: DiskComponent) -> float:
    return comp.key_interval[0]


def overlapping_files(interval: tuple[float, float],
                      level_files: Sequence[DiskComponent]) -> list[DiskComponent]:
    """Files whose half-open key interval intersects ``interval``, in key order."""
    lo, hi = interval
    if not level_files or hi <= lo:
        return []
    # the file straddling lo starts before it; step back one to include it
    i = max(bisect.bisect_right(level_files, lo, key=_start) - 1, 0)
    out = []
    while i < len(level_files) and level_files[i].key_interval[0] < hi:
        f = level_files[i]
        if f.key_interval[1] > lo:
            out.append(f)
        i += 1
    return out


# ---------------------------------------------------------------------------
# Merge output sizing
# ---------------------------------------------------------------------------


def content_distinct(loaded: float, updates: float, K: float,
                     update_distinct) -> float:
    """Distinct entries of loaded keys plus ``updates`` colliding writes over ``K`` keys."""
    if K <= 0:
        return 0.0
    loaded = min(loaded, K)
    return loaded + (1.0 - loaded / K) * update_distinct(updates)


@dataclass(frozen=True)
class Piece:
    """A key sub-interval of a merge output with its pooled content."""
    lo: float
    hi: float
    loaded: float
    updates: float
    size: float


def merge_pieces(inputs: Sequence[DiskComponent], keyspace: int,
                 distinct_fn=None) -> list[Piece]:
    """Split the merge output into elementary key pieces and size each one.

    Within a piece every input contributes content proportional to its
    overlap, so uniform-key inputs stay exact under the independence model.
    """
    # sweep over interval endpoints, keeping the inputs that cover each piece
    opens: dict[float, list[DiskComponent]] = {}
    closes: dict[float, list[DiskComponent]] = {}
    for c in inputs:
        opens.setdefault(c.key_interval[0], []).append(c)
        closes.setdefault(c.key_interval[1], []).append(c)
    cuts = sorted(set(opens) | set(closes))
    active: dict[int, DiskComponent] = {}
    pieces = []
    for lo, hi in zip(cuts, cuts[1:]):
        for c in closes.get(lo, ()):
            active.pop(c.id, None)
        for c in opens.get(lo, ()):
            if c.key_interval[1] > c.key_interval[0]:
                active[c.id] = c
        if hi <= lo or not active:
            continue
        loaded = updates = 0.0
        for c in sorted(active.values(), key=lambda c: c.id):
            a, b = c.key_interval
            frac = (hi - lo) / (b - a)
            loaded += c.loaded * frac
            updates += c.updates * frac
        K = keyspace * (hi - lo)
        if distinct_fn is None:
            size = content_distinct(loaded, updates, K, lambda n: draws_distinct(n, K))
        else:
            size = distinct_fn(loaded, updates)
        pieces.append(Piece(lo, hi, loaded, updates, size))
    return pieces


def split_pieces(pieces: Sequence[Piece], file_max: float) -> list[Piece]:
    """Re-partition merged output into files of at most ``file_max`` entries.

    Cut points fall at exact ``file_max`` boundaries of cumulative size; the
    last file takes the remainder.  Content is assumed uniform within a piece.
    """
    if file_max <= 0:
        raise ValueError("file_max must be positive")
    if not pieces or sum(p.size for p in pieces) <= 0:
        return []
    out: list[Piece] = []
    lo = pieces[0].lo
    loaded = updates = size = 0.0
    for p in pieces:
        if p.size <= 0:
            continue
        pos, left = p.lo, p.size
        while left > 0:
            need = file_max - size
            if need >= left * (1 - 1e-12) and not math.isclose(need, left, rel_tol=1e-12):
                loaded += p.loaded * left / p.size
                updates += p.updates * left / p.size
                size += left
                break
            take = min(need, left)
            frac = take / p.size
            cut = p.hi if take >= left else pos + (p.hi - p.lo) * frac
            out.append(Piece(lo, cut, loaded + p.loaded * frac,
                             updates + p.updates * frac, size + take))
            lo, pos = cut, cut
            left -= take
            loaded = updates = size = 0.0
    if size > 0:
        out.append(Piece(lo, pieces[-1].hi, loaded, updates, size))
    elif out:
        last = out[-1]
        out[-1] = Piece(last.lo, pieces[-1].hi, last.loaded, last.updates, last.size)
    return out

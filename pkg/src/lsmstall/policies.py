"""Merge policies: which components to merge next.

Four families are supported:

``leveling``
    One resident component per level.  Flushed components wait at level 0
    and merge into the level-1 resident; a resident whose logical size
    reaches its cap is pushed into the next level and takes no further
    input until it has moved.
``tiering``
    Up to ``T`` components per level; ``T`` idle components merge into one
    component at the next level.  The last level absorbs its own merges.
``size_tiered``
    A single age-ordered sequence merged by a younger-versus-oldest size
    ratio, in the style of HBase.
``partitioned_leveling``
    LevelDB-style range-partitioned levels driven by per-level scores.

Policies never mutate the tree; they return ``MergeTask`` objects and the
kernel flags their inputs as merging.
"""

from __future__ import annotations

import bisect
import itertools
from dataclasses import dataclass
from typing import Sequence

from .model import (
    FULL_INTERVAL,
    MB,
    DiskComponent,
    MergeTask,
    SimParams,
    TreeState,
    overlapping_files,
)

FAMILIES = ("leveling", "tiering", "size_tiered", "partitioned_leveling")
SELECTIONS = ("round_robin", "choose_best")


@dataclass(frozen=True)
class PolicyConfig:
    family: str = "leveling"
    size_ratio: float = 10
    levels: int = 0  # 0 derives the level count from the dataset size
    st_ratio: float = 1.2
    st_min_merge: int = 2
    st_max_merge: int = 10
    level1_base: int = 1280 * MB
    file_max: int = 64 * MB
    l0_min_merge: int = 4
    selection: str = "round_robin"
    dynamic_level_size: bool = False
    testing_mode: bool = False

    def validate(self) -> None:
        if self.family not in FAMILIES:
            raise ValueError(f"policy.family must be one of {FAMILIES}")
        if self.family in ("leveling", "tiering") and self.size_ratio < 2:
            raise ValueError("policy.size_ratio must be >= 2")
        if self.family == "partitioned_leveling" and self.size_ratio <= 1:
            raise ValueError("policy.size_ratio must be > 1")
        if self.levels < 0:
            raise ValueError("policy.levels must be >= 0")
        if self.st_min_merge < 2:
            raise ValueError("policy.st_min_merge must be >= 2")
        if self.st_max_merge < self.st_min_merge:
            raise ValueError("policy.st_max_merge must be >= policy.st_min_merge")
        if self.st_ratio <= 0:
            raise ValueError("policy.st_ratio must be > 0")
        if self.file_max <= 0:
            raise ValueError("policy.file_max must be > 0")
        if self.level1_base <= 0:
            raise ValueError("policy.level1_base must be > 0")
        if self.l0_min_merge < 1:
            raise ValueError("policy.l0_min_merge must be >= 1")
        if self.selection not in SELECTIONS:
            raise ValueError(f"policy.selection must be one of {SELECTIONS}")


# ---------------------------------------------------------------------------
# Shape
# ---------------------------------------------------------------------------


def derive_levels(dataset_size: float, M: float, T: float, family: str,
                  level1_base: float | None = None) -> int:
    """Number of levels needed to hold ``dataset_size`` entries.

    Leveling counts disk levels 1..L, level i filling up to M*T^i, so the
    tree holds M*T^L.  Tiering counts levels 0..L-1 including the flushed
    level; a level-i component holds M*T^i, so the last level holds
    M*T^(L-1) per component.  Partitioned leveling counts levels 1..L with
    targets level1_base*T^(i-1).
    """
    if dataset_size <= 0 or M <= 0 or T <= 1:
        raise ValueError("dataset_size, M must be positive and T > 1")
    if family == "tiering":
        L = 1
        while M * T ** (L - 1) < dataset_size:
            L += 1
        return L
    if family == "partitioned_leveling":
        base = level1_base if level1_base is not None else M * T
        L = 1
        while base * T ** (L - 1) < dataset_size:
            L += 1
        return L
    if family == "size_tiered":
        return 1
    L = 1
    while M * T ** L < dataset_size:
        L += 1
    return L


def num_levels(policy: PolicyConfig, params: SimParams) -> int:
    if policy.levels:
        return policy.levels
    if policy.family == "partitioned_leveling":
        return derive_levels(params.dataset_size * params.entry_size,
                             params.mem_component_size * params.entry_size,
                             policy.size_ratio, policy.family, policy.level1_base)
    return derive_levels(max(params.dataset_size, 1), params.mem_component_size,
                         policy.size_ratio, policy.family)


def leveling_caps(policy: PolicyConfig, params: SimParams) -> list[float]:
    """Logical-size push-down thresholds for leveling levels 1..L-1.

    ``caps[i]`` is the cap of level i (index 0 unused).  Level i fills from 0
    to (T-1)*M*T^(i-1).  With dynamic level sizing the level-1 ratio is
    solved so the last level's capacity equals the dataset size.
    """
    L = num_levels(policy, params)
    M, T = params.mem_component_size, policy.size_ratio
    if policy.dynamic_level_size and L >= 2 and params.dataset_size > 0:
        r = params.dataset_size / (M * T ** (L - 1))
        full = [M] + [M * r * T ** (i - 1) for i in range(1, L + 1)]
    else:
        full = [M * T ** i for i in range(L + 1)]
    caps = [0.0] + [max(full[i] - full[i - 1], M) for i in range(1, L)]
    return caps


# ---------------------------------------------------------------------------
# Full merges
# ---------------------------------------------------------------------------


def _task(tree: TreeState, inputs: Sequence[DiskComponent], output_level: int,
          now: float, source_level: int, interval=FULL_INTERVAL,
          trivial: bool = False) -> MergeTask:
    total = 0.0 if trivial else sum(c.size for c in inputs)
    return MergeTask(
        id=tree.new_task_id(),
        inputs=tuple(c.id for c in inputs),
        input_total=total,
        remaining=total,
        output_level=output_level,
        output_interval=interval,
        created_at=now,
        source_level=source_level,
    )


def _outputs_into(tree: TreeState, level: int) -> bool:
    return any(t.output_level == level for t in tree.in_flight.values())


def _sources_from(tree: TreeState, level: int) -> bool:
    return any(t.source_level == level for t in tree.in_flight.values())


def next_merges(policy: PolicyConfig, tree: TreeState, params: SimParams,
                now: float = 0.0) -> list[MergeTask]:
    """Merges the full-merge policies want started now, ascending by level."""
    if policy.family == "size_tiered":
        return size_tiered_next(policy, tree, now)
    if policy.family == "partitioned_leveling":
        task = leveldb_pick(policy, tree, params, now)
        return [task] if task else []
    L = num_levels(policy, params)
    tree.ensure_levels((L + 1) if policy.family == "leveling" else L)
    if policy.family == "tiering":
        return _tiering_next(policy, tree, L, now)
    return _leveling_next(policy, tree, params, L, now)


def _tiering_next(policy: PolicyConfig, tree: TreeState, L: int,
                  now: float) -> list[MergeTask]:
    T = int(policy.size_ratio)
    tasks = []
    for i in range(L):
        if _sources_from(tree, i):
            continue
        idle = [c for c in tree.levels[i] if not c.merging]
        if len(idle) >= T:
            out = min(i + 1, L - 1)
            tasks.append(_task(tree, idle[:T], out, now, i))
    return tasks


def _leveling_next(policy: PolicyConfig, tree: TreeState, params: SimParams,
                   L: int, now: float) -> list[MergeTask]:
    caps = leveling_caps(policy, params)
    claimed: set[int] = set()
    tasks = []

    def resident(level: int) -> DiskComponent | None:
        idle = [c for c in tree.levels[level] if not c.merging and c.id not in claimed]
        return idle[-1] if idle else None

    def full(level: int, comp: DiskComponent | None) -> bool:
        # a resident waiting to be pushed down takes no more input
        return comp is not None and level < L and comp.logical_writes >= caps[level]

    # deeper levels first so a full resident is pushed down before level 0
    # tries to grow it further
    for i in range(L - 1, 0, -1):
        src = resident(i)
        if src is None or src.logical_writes < caps[i] or _sources_from(tree, i):
            continue
        if _outputs_into(tree, i + 1):
            continue
        dst = resident(i + 1)
        if full(i + 1, dst):
            continue
        inputs = [src] + ([dst] if dst else [])
        claimed.update(c.id for c in inputs)
        tasks.append(_task(tree, inputs, i + 1, now, i, trivial=dst is None))
    idle0 = [c for c in tree.levels[0] if not c.merging]
    if idle0 and not _sources_from(tree, 0) and not _outputs_into(tree, 1):
        dst = resident(1) if L >= 1 else None
        if full(1, dst):
            return sorted(tasks, key=lambda t: t.source_level)
        inputs = idle0 + ([dst] if dst else [])
        claimed.update(c.id for c in inputs)
        trivial = dst is None and len(idle0) == 1
        tasks.append(_task(tree, inputs, 1, now, 0, trivial=trivial))
    tasks.sort(key=lambda t: t.source_level)
    return tasks


def size_tiered_next(policy: PolicyConfig, tree: TreeState,
                     now: float = 0.0) -> list[MergeTask]:
    """HBase-style selection over the idle run after the newest merging component."""
    seq = tree.levels[0]
    start = 0
    for idx, c in enumerate(seq):
        if c.merging:
            start = idx + 1
    tasks = []
    i = start
    while len(seq) - i >= policy.st_min_merge:
        window = seq[i:i + policy.st_max_merge]
        younger = sum(c.size for c in window[1:])
        if len(window) >= policy.st_min_merge and younger >= policy.st_ratio * window[0].size:
            n = policy.st_min_merge if policy.testing_mode else len(window)
            chosen = window[:n]
            tasks.append(_task(tree, chosen, 0, now, 0))
            i += n
        else:
            i += 1
    return tasks


# ---------------------------------------------------------------------------
# Partitioned leveling
# ---------------------------------------------------------------------------


def level_targets(policy: PolicyConfig, L: int) -> list[float]:
    """Byte targets of partitioned levels; index 0 unused."""
    return [0.0] + [policy.level1_base * policy.size_ratio ** (i - 1) for i in range(1, L + 1)]


def level_scores(policy: PolicyConfig, tree: TreeState, params: SimParams) -> list[float]:
    L = num_levels(policy, params)
    tree.ensure_levels(L + 1)
    targets = level_targets(policy, L)
    idle0 = sum(1 for c in tree.levels[0] if not c.merging)
    scores = [idle0 / policy.l0_min_merge]
    for i in range(1, L):
        nbytes = tree.level_size(i) * params.entry_size
        scores.append(nbytes / targets[i])
    return scores


def _busy_output(tree: TreeState, level: int, interval) -> bool:
    lo, hi = interval
    for t in tree.in_flight.values():
        if t.output_level == level:
            a, b = t.output_interval
            if a < hi and lo < b:
                return True
    return False


def _hull(comps: Sequence[DiskComponent]) -> tuple[float, float]:
    return (min(c.key_interval[0] for c in comps), max(c.key_interval[1] for c in comps))


def leveldb_pick(policy: PolicyConfig, tree: TreeState, params: SimParams,
                 now: float = 0.0) -> MergeTask | None:
    """Score-based pick of at most one partitioned merge.

    Ties between equal scores go to the lower level.  Level 0 merges its
    idle components oldest first: all of them normally, exactly
    ``l0_min_merge`` in testing mode.
    """
    scores = level_scores(policy, tree, params)
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    for lvl in order:
        if scores[lvl] < 1:
            return None
        task = _pick_level(policy, tree, lvl, now)
        if task is not None:
            return task
    return None


def _pick_level(policy: PolicyConfig, tree: TreeState, lvl: int,
                now: float) -> MergeTask | None:
    nxt = tree.levels[lvl + 1]
    if lvl == 0:
        idle = [c for c in tree.levels[0] if not c.merging]
        if policy.testing_mode:
            if len(idle) < policy.l0_min_merge:
                return None
            idle = idle[:policy.l0_min_merge]
        if not idle:
            return None
        span = _hull(idle)
        overlaps = overlapping_files(span, nxt)
        if any(f.merging for f in overlaps) or _busy_output(tree, 1, span):
            return None
        inputs = idle + overlaps
        return _task(tree, inputs, 1, now, 0, interval=_hull(inputs))

    level = tree.levels[lvl]
    if policy.selection == "choose_best":
        files = [f for f in level if not f.merging]
        candidates = iter(sorted(
            files, key=lambda f: (len(overlapping_files(f.key_interval, nxt)), f.key_interval[0])))
    else:
        # files from the cursor onwards, then wrap around; the level is in key order
        at = bisect.bisect_left(level, tree.cursors.get(lvl, 0.0), key=lambda c: c.key_interval[0])
        candidates = (f for f in itertools.chain(level[at:], level[:at]) if not f.merging)
    for f in candidates:
        overlaps = overlapping_files(f.key_interval, nxt)
        if any(o.merging for o in overlaps):
            continue
        span = _hull([f] + overlaps)
        if _busy_output(tree, lvl + 1, span):
            continue
        tree.cursors[lvl] = f.key_interval[1] if f.key_interval[1] < 1.0 else 0.0
        return _task(tree, [f] + overlaps, lvl + 1, now, lvl, interval=span)
    return None

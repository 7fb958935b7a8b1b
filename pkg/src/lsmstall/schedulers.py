"""Merge schedulers: bandwidth allocation, component constraints, write admission."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

from .model import MergeTask, SimParams, TreeState
from .policies import PolicyConfig, num_levels

KINDS = ("single_threaded", "fair", "greedy", "blsm")
CONSTRAINTS = ("global", "local")
INTERACTIONS = ("as_fast_as_possible", "rate_limit")

# proportional gain of the bLSM progress controller
BLSM_GAIN = 4.0


@dataclass(frozen=True)
class SchedulerConfig:
    kind: str = "fair"
    constraint: str = "global"
    max_total: int = 0  # 0 selects the policy default
    max_per_level: int = 0
    l0_stop: int = 12
    write_interaction: str = "as_fast_as_possible"
    max_rate: float = 4000.0
    flush_priority: bool = True

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"scheduler.kind must be one of {KINDS}")
        if self.constraint not in CONSTRAINTS:
            raise ValueError(f"scheduler.constraint must be one of {CONSTRAINTS}")
        if self.write_interaction not in INTERACTIONS:
            raise ValueError(f"scheduler.write_interaction must be one of {INTERACTIONS}")
        if self.write_interaction == "rate_limit" and self.max_rate <= 0:
            raise ValueError("scheduler.max_rate must be > 0")
        if self.max_total < 0 or self.max_per_level < 0 or self.l0_stop < 1:
            raise ValueError("scheduler constraint limits must be positive")


@dataclass
class Allocation:
    rates: dict[int, float] = field(default_factory=dict)
    flush_rate: float = 0.0

    def total(self) -> float:
        return self.flush_rate + sum(self.rates.values())


def allocate(cfg: SchedulerConfig, tasks: Sequence[MergeTask], flush_active: bool,
             B: float, tree: TreeState | None = None) -> Allocation:
    """Split bandwidth ``B`` between the flush and the live merges."""
    if B <= 0:
        raise ValueError("bandwidth must be positive")
    live = [t for t in tasks if t.remaining > 0]
    alloc = Allocation()
    if flush_active:
        if cfg.flush_priority or not live:
            alloc.flush_rate = B
        else:
            alloc.flush_rate = B / (len(live) + 1)
    spare = B - alloc.flush_rate
    if spare <= 0 or not live:
        return alloc
    if cfg.kind == "fair":
        for t in live:
            alloc.rates[t.id] = spare / len(live)
    elif cfg.kind == "greedy":
        alloc.rates[greedy_choice(live).id] = spare
    elif cfg.kind == "single_threaded":
        first = min(live, key=lambda t: (t.created_at, t.id))
        alloc.rates[first.id] = spare
    else:
        backlog = sum(t.remaining for t in live)
        for t in live:
            alloc.rates[t.id] = spare * t.remaining / backlog
    return alloc


def greedy_choice(tasks: Sequence[MergeTask]) -> MergeTask:
    return min(tasks, key=lambda t: (t.remaining, t.id))


class GreedyScheduler:
    """Event-driven form of the greedy scheduler.

    The active merge is re-chosen whenever a merge is scheduled or
    completes; switching pauses the old merge with its progress intact.
    """

    def __init__(self) -> None:
        self.ops: dict[int, MergeTask] = {}
        self.active: MergeTask | None = None

    def schedule(self, task: MergeTask) -> MergeTask | None:
        self.ops[task.id] = task
        return self._reschedule()

    def complete(self, task_id: int) -> MergeTask | None:
        self.ops.pop(task_id, None)
        if self.active is not None and self.active.id == task_id:
            self.active = None
        return self._reschedule()

    def _reschedule(self) -> MergeTask | None:
        self.active = greedy_choice(list(self.ops.values())) if self.ops else None
        return self.active


def greedy_reschedule(tasks: Sequence[MergeTask]) -> int | None:
    """Id of the merge the greedy scheduler runs, or None when idle."""
    live = [t for t in tasks if t.remaining > 0]
    return greedy_choice(live).id if live else None


# ---------------------------------------------------------------------------
# Component constraints
# ---------------------------------------------------------------------------


def default_limits(cfg: SchedulerConfig, policy: PolicyConfig,
                   params: SimParams) -> tuple[int, int]:
    """(max_total, max_per_level) after filling policy defaults."""
    L = num_levels(policy, params)
    T = int(policy.size_ratio)
    if policy.family == "leveling":
        total, per_level = 2 * L, 2
    elif policy.family == "tiering":
        total, per_level = 2 * T * L, 2 * T
    elif policy.family == "size_tiered":
        total, per_level = 50, 50
    else:
        total, per_level = cfg.l0_stop, cfg.l0_stop
    return (cfg.max_total or total, cfg.max_per_level or per_level)


def constraint_violated(cfg: SchedulerConfig, policy: PolicyConfig,
                        params: SimParams, tree: TreeState) -> bool:
    if policy.family == "partitioned_leveling":
        return len(tree.levels[0]) >= cfg.l0_stop
    max_total, max_per_level = default_limits(cfg, policy, params)
    if cfg.constraint == "local" and policy.family != "size_tiered":
        return any(n > max_per_level for n in tree.level_counts())
    return tree.total_components() > max_total


def admit_writes(cfg: SchedulerConfig, policy: PolicyConfig, params: SimParams,
                 tree: TreeState, memory_full: bool = False) -> str:
    """``"open"`` or ``"stalled"`` for in-memory write admission."""
    if memory_full or constraint_violated(cfg, policy, params, tree):
        return "stalled"
    return "open"


# ---------------------------------------------------------------------------
# bLSM spring-and-gear
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LevelProgress:
    """Fill and merge state of one bLSM level.

    ``fill`` is the logical size of data heading into the level's next
    component, ``capacity`` the size at which it is sealed, and the merge
    fields describe the merge draining the level's previous component.
    """
    fill: float
    capacity: float
    merge_input: float = 0.0
    merge_remaining: float = 0.0


def blsm_rates(levels: Sequence[LevelProgress], B: float) -> tuple[float, list[float]]:
    """Write-rate cap and per-level merge rates for the spring-and-gear model.

    Merges receive bandwidth in proportion to their remaining work.  Each
    level with a live merge caps the write rate so the level fills no faster
    than its merge progresses, with a proportional correction that throttles
    harder as fill runs ahead of merge progress.
    """
    if B <= 0:
        raise ValueError("bandwidth must be positive")
    backlog = sum(lv.merge_remaining for lv in levels)
    if backlog <= 0:
        return B, [0.0] * len(levels)
    rates = [B * lv.merge_remaining / backlog for lv in levels]
    cap = math.inf
    for lv, rate in zip(levels, rates):
        if lv.merge_remaining <= 0 or lv.merge_input <= 0:
            continue
        progress = 1.0 - lv.merge_remaining / lv.merge_input
        fill = min(lv.fill / lv.capacity, 1.0)
        matched = lv.capacity * rate / lv.merge_input
        gain = min(max(1.0 + BLSM_GAIN * (progress - fill), 0.0), 2.0)
        cap = min(cap, matched * gain)
    if math.isinf(cap):
        cap = B
    return max(cap, 0.0), rates

"""Deterministic virtual-time simulation of an LSM write pipeline.

Between events every rate is constant: flush and merge bandwidth shares,
the in-memory admission rate, and the arrival rate.  The kernel advances
straight to the earliest next event, applies it, and settles all
instantaneous consequences (new merges, zero-cost moves, backlog drains)
before computing the next interval.  Nothing is sampled, so identical
inputs give bit-identical traces.
"""

from __future__ import annotations

import copy
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Any

from .latency import Curve, LatencyDistribution, queue_account
from .model import (
    FULL_INTERVAL,
    DiskComponent,
    MergeTask,
    SimParams,
    TreeState,
    content_distinct,
    draws_distinct,
    merge_pieces,
    split_pieces,
    zipf_distinct,
)
from .policies import PolicyConfig, leveling_caps, next_merges, num_levels
from .schedulers import (
    LevelProgress,
    SchedulerConfig,
    allocate,
    blsm_rates,
    constraint_violated,
)

log = logging.getLogger(__name__)

ARRIVAL_KINDS = ("closed", "open_constant", "open_bursty", "open_piecewise")

# tie-break order for events sharing a timestamp
EVENT_PRIORITY = {
    "merge_done": 0,
    "flush_done": 1,
    "mem_full": 2,
    "queue_drained": 3,
    "stall_release": 4,
    "control_tick": 5,
    "arrival_segment_boundary": 6,
}

NO_PROGRESS_LIMIT = 1e9
BLSM_TICK = 1.0
REL_EPS = 1e-9


class SimulationError(RuntimeError):
    """The simulation cannot make progress."""


@dataclass(frozen=True)
class ArrivalProcess:
    kind: str = "closed"
    clients: int = 1
    rate: float = 0.0
    base_rate: float = 2000.0
    base_duration: float = 1500.0
    burst_rate: float = 8000.0
    burst_duration: float = 300.0
    segments: tuple[tuple[float, float], ...] = ()  # (duration, rate) for open_piecewise
    duration: float = 7200.0

    def validate(self) -> None:
        if self.kind not in ARRIVAL_KINDS:
            raise ValueError(f"arrivals.kind must be one of {ARRIVAL_KINDS}")
        if self.duration <= 0:
            raise ValueError("arrivals.duration must be > 0")
        if self.kind == "closed" and self.clients < 1:
            raise ValueError("arrivals.clients must be >= 1")
        if self.kind == "open_constant" and self.rate < 0:
            raise ValueError("arrivals.rate must be >= 0")
        if self.kind == "open_bursty":
            if min(self.base_rate, self.burst_rate) <= 0:
                raise ValueError("bursty rates must be > 0")
            if min(self.base_duration, self.burst_duration) <= 0:
                raise ValueError("bursty durations must be > 0")
        if self.kind == "open_piecewise":
            if not self.segments or any(d <= 0 or r < 0 for d, r in self.segments):
                raise ValueError("piecewise segments need positive durations and rates >= 0")

    @property
    def closed(self) -> bool:
        return self.kind == "closed"

    def rate_segments(self, duration: float | None = None) -> list[tuple[float, float, float]]:
        """(start, end, rate) pieces covering [0, duration) relative to phase start."""
        end = self.duration if duration is None else duration
        if self.kind == "closed":
            return []
        if self.kind == "open_constant":
            return [(0.0, end, self.rate)]
        if self.kind == "open_bursty":
            cycle = [(self.base_duration, self.base_rate), (self.burst_duration, self.burst_rate)]
        else:
            cycle = list(self.segments)
        out, t, k = [], 0.0, 0
        while t < end:
            d, r = cycle[k % len(cycle)]
            out.append((t, min(t + d, end), r))
            t += d
            k += 1
            if self.kind == "open_piecewise" and k == len(cycle) and t < end:
                out.append((t, end, cycle[-1][1]))
                break
        return out


@dataclass(frozen=True)
class SimEvent:
    time: float
    kind: str
    id: int


@dataclass(frozen=True)
class StallInterval:
    start: float
    end: float
    cause: str


@dataclass
class Trace:
    config_echo: dict[str, Any]
    events: list[SimEvent]
    windows: list[tuple[float, float]]
    components: list[tuple[float, int]]
    stalls: list[StallInterval]
    latency: LatencyDistribution
    start: float
    end: float
    arrivals: Curve
    admissions: Curve
    queue_final: float = 0.0
    queue_growing: bool = False
    annotations: list[str] = field(default_factory=list)

    @property
    def duration(self) -> float:
        return self.end - self.start

    def processed(self, t0: float | None = None, t1: float | None = None) -> float:
        t0 = self.start if t0 is None else t0
        t1 = self.end if t1 is None else t1
        return self.admissions.at(t1, left=True) - self.admissions.at(t0, left=True)

    def stalled_time(self) -> float:
        return sum(s.end - s.start for s in self.stalls)

    def to_json(self) -> dict[str, Any]:
        return {
            "config_echo": self.config_echo,
            "events": [{"time": e.time, "kind": e.kind, "id": e.id} for e in self.events],
            "windows": [{"time_s": t, "throughput_per_s": w} for t, w in self.windows],
            "components": [{"time_s": t, "component_count": n} for t, n in self.components],
            "stalls": [{"start_s": s.start, "end_s": s.end, "cause": s.cause} for s in self.stalls],
            "latency": self.latency.summary(),
        }


def measure_windows(admissions: Curve, start: float, end: float,
                    window: float = 30.0) -> list[tuple[float, float]]:
    """Processed writes per second in consecutive windows; a partial tail is dropped."""
    if window <= 0:
        raise ValueError("window must be positive")
    out = []
    n = int(math.floor((end - start) / window + 1e-9))
    prev = admissions.at(start, left=True)
    for k in range(n):
        t1 = start + (k + 1) * window
        cur = admissions.at(t1, left=True)
        out.append((start + k * window, (cur - prev) / window))
        prev = cur
    return out


@dataclass
class _Memory:
    writes: float = 0.0
    insert: bool = False  # filled by the bulk load with unique keys


class Simulator:
    """Mutable simulation state; ``run`` advances it through one phase."""

    def __init__(self, params: SimParams, policy: PolicyConfig, sched: SchedulerConfig,
                 tree: TreeState | None = None) -> None:
        params.validate()
        policy.validate()
        sched.validate()
        if policy.family == "partitioned_leveling" and params.key_distribution == "zipf":
            raise ValueError("zipf keys are not supported with partitioned_leveling")
        if sched.kind == "blsm" and (policy.family != "leveling"
                                     or num_levels(policy, params) != 2):
            raise ValueError("the blsm scheduler needs leveling with two disk levels")
        self.params = params
        self.policy = policy
        self.sched = sched
        self.tree = tree or TreeState(partitioned=policy.family == "partitioned_leveling")
        self.L = num_levels(policy, params)
        if policy.family == "leveling":
            self.tree.ensure_levels(self.L + 1)
            self.caps = leveling_caps(policy, params)
        elif policy.family == "tiering":
            self.tree.ensure_levels(self.L)
        elif policy.family == "partitioned_leveling":
            self.tree.ensure_levels(self.L + 1)
        self.now = 0.0
        self.active: _Memory | None = _Memory()
        self.sealed: deque[_Memory] = deque()
        self.flush_remaining = 0.0
        self.insert_mode = False
        self._comp: dict[int, DiskComponent] = {c.id: c for c in self.tree.components()}
        if params.key_distribution == "zipf":
            self._update_distinct = lambda n, K: zipf_distinct(
                float(round(n)), params.keyspace, params.zipf_s) * K / params.keyspace
        else:
            self._update_distinct = draws_distinct

    # -- state helpers -----------------------------------------------------

    def clone(self) -> "Simulator":
        return copy.deepcopy(self)

    def with_config(self, policy: PolicyConfig | None = None,
                    sched: SchedulerConfig | None = None) -> "Simulator":
        """Copy of the current state running under a different configuration."""
        sim = self.clone()
        if policy is not None:
            if policy.family != sim.policy.family:
                raise ValueError("cannot switch policy family mid-run")
            policy.validate()
            sim.policy = policy
            if policy.family == "leveling":
                sim.caps = leveling_caps(policy, sim.params)
        if sched is not None:
            sched.validate()
            sim.sched = sched
        return sim

    def _distinct(self, loaded: float, updates: float, K: float) -> float:
        return content_distinct(loaded, updates, K, lambda n: self._update_distinct(n, K))

    def _memory_size(self, mem: _Memory) -> tuple[float, float, float]:
        """(loaded, updates, distinct) content of a memory component."""
        if mem.insert:
            return mem.writes, 0.0, mem.writes
        U = self.params.keyspace
        return 0.0, mem.writes, self._distinct(0.0, mem.writes, U)

    def _new_memory(self) -> _Memory:
        return _Memory(insert=self.insert_mode)

    def _flush_work(self) -> float:
        return self._memory_size(self.sealed[0])[2] if self.sealed else 0.0

    def _add_component(self, comp: DiskComponent, index: int | None = None) -> None:
        if index is None:
            self.tree.add(comp)
        else:
            self.tree.insert(comp, index)
        self._comp[comp.id] = comp

    def _mem_full(self) -> bool:
        return self.active is None

    def stalled_by_constraint(self) -> bool:
        return constraint_violated(self.sched, self.policy, self.params, self.tree)

    # -- flushes and merges ------------------------------------------------

    def _seal(self) -> None:
        mem = self.active
        self.sealed.append(mem)
        if len(self.sealed) == 1:
            self.flush_remaining = self._flush_work()
        self.active = self._new_memory() if len(self.sealed) < self.params.mem_component_count else None

    def _complete_flush(self) -> None:
        mem = self.sealed.popleft()
        loaded, updates, size = self._memory_size(mem)
        if mem.writes > 0:
            comp = DiskComponent(self.tree.new_component_id(), 0, loaded, updates, size,
                                 FULL_INTERVAL, self.now)
            self._add_component(comp)
        self.flush_remaining = self._flush_work()
        if self.active is None:
            self.active = self._new_memory()

    def _start_merges(self) -> bool:
        if self.policy.family == "partitioned_leveling" and self.sched.kind == "single_threaded":
            if self.tree.in_flight:
                return False
        tasks = next_merges(self.policy, self.tree, self.params, self.now)
        for task in tasks:
            for cid in task.inputs:
                comp = self._comp[cid]
                assert not comp.merging, f"component {cid} already merging"
                comp.merging = True
            self.tree.in_flight[task.id] = task
        return bool(tasks)

    def _complete_merge(self, task: MergeTask) -> None:
        inputs = [self._comp[cid] for cid in task.inputs]
        index = None
        if self.policy.family == "size_tiered":
            index = min(self.tree.levels[0].index(c) for c in inputs)
        self.tree.discard(inputs)
        for cid in task.inputs:
            del self._comp[cid]
        del self.tree.in_flight[task.id]
        if task.input_total == 0:
            # zero-cost move into an empty slot of the output level
            for c in inputs:
                c.level = task.output_level
                c.merging = False
                self._add_component(c)
            return
        U = self.params.keyspace
        if self.tree.partitioned:
            pieces = merge_pieces(inputs, U, None)
            files = split_pieces(pieces, self.policy.file_max / self.params.entry_size)
            for f in files:
                comp = DiskComponent(self.tree.new_component_id(), task.output_level,
                                     f.loaded, f.updates, f.size, (f.lo, f.hi), self.now)
                self._add_component(comp)
            return
        loaded = min(sum(c.loaded for c in inputs), U)
        updates = sum(c.updates for c in inputs)
        comp = DiskComponent(self.tree.new_component_id(), task.output_level, loaded, updates,
                             self._distinct(loaded, updates, U), FULL_INTERVAL, self.now)
        self._add_component(comp, index)

    # -- bLSM ----------------------------------------------------------------

    def _blsm_levels(self, tasks: list[MergeTask]) -> list[LevelProgress]:
        M = self.params.mem_component_size
        mem_fill = (self.active.writes if self.active else M) + sum(m.writes for m in self.sealed)
        l0 = [t for t in tasks if t.source_level == 0]
        l1 = [t for t in tasks if t.source_level == 1]
        idle1 = [c for c in self.tree.levels[1] if not c.merging]
        fill1 = sum(c.logical_writes for c in idle1) + sum(c.logical_writes for c in self.tree.levels[0])
        cap1 = self.caps[1] if len(self.caps) > 1 else M
        out = []
        for fill, cap, ts in ((mem_fill, M, l0), (fill1, cap1, l1)):
            out.append(LevelProgress(fill, cap, sum(t.input_total for t in ts),
                                     sum(t.remaining for t in ts)))
        return out

    # -- main loop -----------------------------------------------------------

    def run(self, arrivals: ArrivalProcess, duration: float | None = None,
            window: float = 30.0, write_limit: float | None = None,
            drain: bool = False, config_echo: dict | None = None) -> Trace:
        """Advance the simulation through one phase and return its trace.

        ``write_limit`` caps the number of admitted writes (used by the bulk
        load); once it is reached the partial memory component is sealed and
        the run stops, or with ``drain`` keeps going until no flush or merge
        remains.
        """
        arrivals.validate()
        duration = arrivals.duration if duration is None else duration
        start, end = self.now, self.now + duration
        closed = arrivals.closed
        segs = [(start + a, start + b, r) for a, b, r in arrivals.rate_segments(duration)]
        boundaries = sorted({b for _, b, _ in segs} | {a for a, _, _ in segs})
        arrival_curve = Curve.from_rates(segs) if not closed else Curve()
        adm = Curve()
        adm.append(start, 0.0)
        admitted = 0.0
        queue = 0.0
        events: list[SimEvent] = []
        comps: list[tuple[float, int]] = []
        stalls: list[StallInterval] = []
        stall_open: tuple[float, str] | None = None
        B = self.params.bandwidth
        M = self.params.mem_component_size
        blsm = self.sched.kind == "blsm"
        limit = math.inf if write_limit is None else write_limit
        next_tick = start + BLSM_TICK
        queue_history: list[float] = []

        def rate_now() -> float:
            if closed:
                return math.inf
            for a, b, r in segs:
                if a <= self.now < b:
                    return r
            return 0.0

        def write_cap(tasks) -> float:
            cap = math.inf
            if self.sched.write_interaction == "rate_limit":
                cap = self.sched.max_rate
            if blsm:
                bcap, _ = blsm_rates(self._blsm_levels(tasks), B)
                cap = min(cap, bcap)
            return cap

        def admit_instant(amount: float) -> float:
            """Pour ``amount`` writes into memory at once; returns the amount taken."""
            taken = 0.0
            while amount - taken > 0 and self.active is not None and not self.stalled_by_constraint():
                room = M - self.active.writes
                put = min(room, amount - taken)
                self.active.writes += put
                taken += put
                if self.active.writes >= M * (1 - 1e-12):
                    self.active.writes = M
                    self._seal()
            return taken

        while True:
            # settle instantaneous changes
            changed = True
            while changed:
                changed = False
                for task in sorted(self.tree.in_flight.values(), key=lambda t: t.id):
                    if task.remaining <= 0:
                        self._complete_merge(task)
                        events.append(SimEvent(self.now, "merge_done", task.id))
                        changed = True
                if self._start_merges():
                    changed = True
                tasks = list(self.tree.in_flight.values())
                cap = write_cap(tasks)
                if math.isinf(cap) and self.now < end:
                    want = (limit - admitted) if closed else min(queue, limit - admitted)
                    if want > 0:
                        got = admit_instant(want)
                        if got > 0:
                            adm.append(self.now, admitted)
                            admitted += got
                            if not closed:
                                queue -= got
                            adm.append(self.now, admitted)
                            changed = True
                if (write_limit is not None and admitted >= limit and self.active is not None
                        and self.active.writes > 0):
                    # end of bulk load: push the partial memory component out
                    self._seal()
                    changed = True
            tasks = sorted(self.tree.in_flight.values(), key=lambda t: t.id)
            comps.append((self.now, self.tree.total_components()))

            # stall bookkeeping
            lam = rate_now()
            mem_full = self.active is None
            stalled = mem_full or self.stalled_by_constraint()
            # a saturating closed client always finds memory full; only
            # constraint stalls are stalls there
            wants = ((closed and admitted < limit and not mem_full)
                     or (not closed and (queue > 0 or lam > 0)))
            if stalled and wants and self.now < end:
                cause = "memory_full" if mem_full else "component_constraint"
                if stall_open is None:
                    stall_open = (self.now, cause)
                elif stall_open[1] != cause:
                    if self.now > stall_open[0]:
                        stalls.append(StallInterval(stall_open[0], self.now, stall_open[1]))
                    stall_open = (self.now, cause)
            elif stall_open is not None:
                if self.now > stall_open[0]:
                    stalls.append(StallInterval(stall_open[0], self.now, stall_open[1]))
                    events.append(SimEvent(self.now, "stall_release", 0))
                stall_open = None

            if self.now >= end and not (drain and (tasks or self.sealed)):
                break
            if (write_limit is not None and admitted >= limit
                    and (self.active is None or self.active.writes == 0)
                    and (not drain or not (tasks or self.sealed))):
                break

            # rates for the coming interval
            alloc = allocate(self.sched, tasks, bool(self.sealed), B)
            assert alloc.total() <= B * (1 + 1e-9)
            cap = write_cap(tasks)
            if stalled or self.now >= end or admitted >= limit:
                adm_rate = 0.0
            elif closed:
                adm_rate = cap if not math.isinf(cap) else 0.0
            elif queue > 0:
                adm_rate = cap if not math.isinf(cap) else 0.0
            else:
                adm_rate = min(lam, cap)
            q_rate = 0.0 if closed or self.now >= end else lam - adm_rate

            # next event
            cands: list[tuple[float, int, str, int]] = []
            if self.sealed and alloc.flush_rate > 0:
                cands.append((self.now + self.flush_remaining / alloc.flush_rate,
                              EVENT_PRIORITY["flush_done"], "flush_done", 0))
            for t in tasks:
                r = alloc.rates.get(t.id, 0.0)
                if r > 0:
                    cands.append((self.now + t.remaining / r, EVENT_PRIORITY["merge_done"],
                                  "merge_done", t.id))
            if adm_rate > 0 and self.active is not None:
                room = M - self.active.writes
                if closed or write_limit is not None:
                    room = min(room, limit - admitted)
                cands.append((self.now + room / adm_rate, EVENT_PRIORITY["mem_full"], "mem_full", 0))
            if queue > 0 and q_rate < 0:
                cands.append((self.now + queue / -q_rate, EVENT_PRIORITY["queue_drained"],
                              "queue_drained", 0))
            if blsm and self.now < end:
                cands.append((next_tick, EVENT_PRIORITY["control_tick"], "control_tick", 0))
            for b in boundaries:
                if b > self.now:
                    cands.append((b, EVENT_PRIORITY["arrival_segment_boundary"],
                                  "arrival_segment_boundary", 0))
                    break
            if self.now < end:
                cands.append((end, 99, "end", 0))
            if not cands:
                if drain and (tasks or self.sealed):
                    raise SimulationError(f"no progress possible at t={self.now}")
                break
            t_next, _, kind, eid = min(cands)
            if t_next - self.now > NO_PROGRESS_LIMIT:
                raise SimulationError(f"no event within {NO_PROGRESS_LIMIT:g}s of t={self.now}")
            dt = max(t_next - self.now, 0.0)

            # advance continuous state
            if self.sealed:
                self.flush_remaining -= alloc.flush_rate * dt
            for t in tasks:
                t.remaining -= alloc.rates.get(t.id, 0.0) * dt
            if adm_rate > 0:
                gained = adm_rate * dt
                self.active.writes += gained
                admitted += gained
                if not closed:
                    queue = max(queue - adm_rate * dt + lam * dt, 0.0)
            elif not closed:
                queue += lam * dt
            if not closed and adm_rate > 0 and kind == "queue_drained":
                queue = 0.0
            self.now = t_next
            if adm_rate > 0 or (adm.times and adm.times[-1] < self.now):
                adm.append(self.now, admitted)
            if kind == "control_tick":
                next_tick += BLSM_TICK

            # apply discrete completions, in tie-break order
            if kind == "flush_done":
                self.flush_remaining = 0.0
            if kind == "merge_done":
                self.tree.in_flight[eid].remaining = 0.0
            for t in tasks:
                if t.remaining <= REL_EPS * max(t.input_total, 1.0):
                    t.remaining = 0.0
            if self.sealed and self.flush_remaining <= REL_EPS * M:
                self._complete_flush()
                events.append(SimEvent(self.now, "flush_done", 0))
            if self.active is not None and (kind == "mem_full" or self.active.writes >= M * (1 - 1e-12)):
                if self.active.writes > 0:
                    if self.active.writes >= M * (1 - 1e-12):
                        self.active.writes = M
                    self._seal()
                    events.append(SimEvent(self.now, "mem_full", 0))
            if kind in ("queue_drained", "arrival_segment_boundary", "control_tick"):
                events.append(SimEvent(self.now, kind, 0))
            queue_history.append(queue)

        if stall_open is not None and self.now > stall_open[0]:
            stalls.append(StallInterval(stall_open[0], self.now, stall_open[1]))
        finish = self.now
        adm.append(finish, admitted)
        if closed:
            arrival_curve = adm
            latency = LatencyDistribution.empty()
        else:
            latency = queue_account(arrival_curve, admissions=adm)
        half = queue_history[len(queue_history) // 2] if queue_history else 0.0
        return Trace(
            config_echo=config_echo or {},
            events=events,
            windows=measure_windows(adm, start, min(end, finish), window),
            components=comps,
            stalls=stalls,
            latency=latency,
            start=start,
            end=end,
            arrivals=arrival_curve,
            admissions=adm,
            queue_final=queue,
            queue_growing=queue > 0 and queue > half,
            annotations=[f"periodic force every {self.params.force_bytes} bytes: no-op"],
        )

    def bulk_load(self, n: float | None = None, quiesce: bool = True) -> None:
        """Insert ``n`` unique keys (default: the dataset size).

        The partial memory component is flushed at the end.  With
        ``quiesce`` the load also waits for every merge it triggered, so the
        next phase starts from a settled tree; otherwise in-flight merges
        carry over.
        """
        n = self.params.dataset_size if n is None else n
        if n <= 0:
            return
        self.insert_mode = True
        if self.active is not None and self.active.writes == 0:
            self.active = self._new_memory()
        try:
            self.run(ArrivalProcess("closed", duration=NO_PROGRESS_LIMIT / 2),
                     write_limit=n, drain=quiesce)
        finally:
            self.insert_mode = False
            if self.active is not None and self.active.writes == 0:
                self.active = self._new_memory()
        # re-base the clock so later phases start at zero
        shift = self.now
        self.now = 0.0
        for c in self.tree.components():
            c.created_at -= shift
        for t in self.tree.in_flight.values():
            t.created_at -= shift


def run_sim(params: SimParams, policy: PolicyConfig, sched: SchedulerConfig,
            arrivals: ArrivalProcess, seed: int = 0, preload: bool = True,
            window: float = 30.0, config_echo: dict | None = None) -> Trace:
    """One run over a freshly loaded tree.

    The kernel draws no random numbers; ``seed`` is accepted so that every
    entry point shares one signature and is recorded in the echo.
    """
    sim = Simulator(params, policy, sched)
    if preload:
        sim.bulk_load()
    echo = dict(config_echo or {})
    echo.setdefault("seed", str(seed))
    return sim.run(arrivals, window=window, config_echo=echo)

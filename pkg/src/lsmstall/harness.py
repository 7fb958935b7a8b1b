"""Two-phase evaluation: measure maximum throughput, then run below it.

The testing phase drives the tree with saturating closed clients and reports
the write throughput ``W`` after a warm-up.  The running phase offers an open
arrival stream at ``rho * W`` and reports stalls and write latencies.  Both
phases start from the same bulk-loaded tree, as if each were a separate
experiment on a freshly loaded store.
"""

from __future__ import annotations

import csv
import json
import logging
import os
from dataclasses import dataclass, field, replace
from typing import Any, Sequence

from .kernel import ArrivalProcess, Simulator, Trace
from .model import SimParams
from .policies import PolicyConfig
from .schedulers import SchedulerConfig

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class HarnessParams:
    test_duration: float = 7200.0
    warmup: float = 1200.0
    run_duration: float = 7200.0
    rho: float = 0.95
    window: float = 30.0

    def validate(self) -> None:
        if self.test_duration <= 0 or self.run_duration <= 0:
            raise ValueError("harness durations must be > 0")
        if not 0 <= self.warmup < self.test_duration:
            raise ValueError("harness.warmup must lie in [0, test_duration)")
        if not 0 < self.rho < 1:
            raise ValueError("harness.rho must lie in (0, 1)")
        if self.window <= 0:
            raise ValueError("harness.window must be > 0")


@dataclass
class PhaseReport:
    phase: str
    measured_W: float
    target_rate: float
    utilization: float
    stall_fraction: float
    trace: Trace
    queue_growing: bool = False
    warnings: list[str] = field(default_factory=list)

    @property
    def latency(self):
        return self.trace.latency

    def p99(self) -> float:
        return self.trace.latency.quantile(0.99)

    def to_json(self) -> dict[str, Any]:
        return {
            "phase": self.phase,
            "measured_W": self.measured_W,
            "target_rate": self.target_rate,
            "utilization": self.utilization,
            "stall_fraction": self.stall_fraction,
            "stall_count": len(self.trace.stalls),
            "queue_final": self.trace.queue_final,
            "queue_growing": self.queue_growing,
            "latency": self.trace.latency.summary(),
            "warnings": list(self.warnings),
            "config_echo": self.trace.config_echo,
        }


def load_tree(params: SimParams, policy: PolicyConfig,
              sched: SchedulerConfig | None = None) -> Simulator:
    """A simulator holding the bulk-loaded dataset with all merges settled."""
    sim = Simulator(params, replace(policy, testing_mode=False), sched or SchedulerConfig())
    sim.bulk_load()
    return sim


def testing_phase(params: SimParams, policy: PolicyConfig,
                  sched: SchedulerConfig | None = None,
                  harness: HarnessParams = HarnessParams(),
                  loaded: Simulator | None = None,
                  config_echo: dict | None = None) -> PhaseReport:
    """Closed-client run measuring ``W`` after the warm-up.

    The policy's ``testing_mode`` restrictions apply here and only here.
    """
    harness.validate()
    warnings = []
    if sched is None:
        sched = SchedulerConfig(kind="fair")
    elif sched.kind == "greedy":
        msg = "greedy scheduler starves large merges; testing-phase W will be optimistic"
        log.warning(msg)
        warnings.append(msg)
    base = loaded if loaded is not None else load_tree(params, policy, sched)
    sim = base.with_config(policy, sched)
    trace = sim.run(ArrivalProcess("closed", duration=harness.test_duration),
                    window=harness.window, config_echo=config_echo)
    span = harness.test_duration - harness.warmup
    W = trace.processed(trace.start + harness.warmup, trace.end) / span
    return PhaseReport("testing", W, 0.0, 1.0,
                       trace.stalled_time() / harness.test_duration, trace, False, warnings)


def running_phase(params: SimParams, policy: PolicyConfig, sched: SchedulerConfig,
                  W: float, rho: float | None = None,
                  harness: HarnessParams = HarnessParams(),
                  loaded: Simulator | None = None,
                  arrivals: ArrivalProcess | None = None,
                  config_echo: dict | None = None) -> PhaseReport:
    """Open-arrival run at ``rho * W`` (or an explicit arrival process)."""
    harness.validate()
    rho = harness.rho if rho is None else rho
    if not 0 < rho < 1:
        raise ValueError("utilization must lie in (0, 1)")
    if W <= 0:
        raise ValueError("measured W must be > 0")
    target = rho * W
    if arrivals is None or arrivals.kind in ("closed", "open_constant"):
        arrivals = ArrivalProcess("open_constant", rate=target, duration=harness.run_duration)
    base = loaded if loaded is not None else load_tree(params, policy, sched)
    sim = base.with_config(replace(policy, testing_mode=False), sched)
    trace = sim.run(arrivals, window=harness.window, config_echo=config_echo)
    warnings = []
    if trace.queue_growing:
        msg = f"arrival rate exceeds sustainable capacity: {trace.queue_final:.0f} writes still queued"
        log.warning(msg)
        warnings.append(msg)
    return PhaseReport("running", W, target, rho,
                       trace.stalled_time() / trace.duration, trace, trace.queue_growing, warnings)


def utilization_sweep(params: SimParams, policy: PolicyConfig, sched: SchedulerConfig,
                      W: float, rhos: Sequence[float],
                      harness: HarnessParams = HarnessParams(),
                      loaded: Simulator | None = None) -> list[PhaseReport]:
    if not rhos:
        return []
    base = loaded if loaded is not None else load_tree(params, policy, sched)
    return [running_phase(params, policy, sched, W, rho, harness, base) for rho in rhos]


def testing_scheduler(policy: PolicyConfig, sched: SchedulerConfig) -> SchedulerConfig:
    """Scheduler used to measure W for a given running-phase scheduler.

    Full-merge trees are measured with the fair scheduler.  Partitioned
    trees keep their own (single-threaded, LevelDB-style) scheduler and bLSM
    keeps its controller.  Write-rate limits never apply while measuring.
    """
    kind = sched.kind
    if policy.family != "partitioned_leveling" and kind != "blsm":
        kind = "fair"
    return replace(sched, kind=kind, write_interaction="as_fast_as_possible")


def two_phase(params: SimParams, policy: PolicyConfig, sched: SchedulerConfig,
              harness: HarnessParams = HarnessParams(),
              arrivals: ArrivalProcess | None = None,
              config_echo: dict | None = None) -> tuple[PhaseReport, PhaseReport]:
    """Testing phase, then the running phase with ``sched``."""
    loaded = load_tree(params, policy, sched)
    testing = testing_phase(params, policy, testing_scheduler(policy, sched),
                            harness, loaded, config_echo)
    running = running_phase(params, policy, sched, testing.measured_W, None, harness,
                            loaded, arrivals, config_echo)
    return testing, running


# ---------------------------------------------------------------------------
# Output files
# ---------------------------------------------------------------------------


def _write_csv(path: str, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) if isinstance(x, float) else x for x in row])


def write_json(path: str, obj: Any) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_series(out_dir: str, trace: Trace) -> None:
    """throughput.csv, components.csv and stalls.csv for one trace."""
    os.makedirs(out_dir, exist_ok=True)
    _write_csv(os.path.join(out_dir, "throughput.csv"), ("time_s", "throughput_per_s"),
               trace.windows)
    _write_csv(os.path.join(out_dir, "components.csv"), ("time_s", "component_count"),
               trace.components)
    _write_csv(os.path.join(out_dir, "stalls.csv"), ("start_s", "end_s", "cause"),
               ((s.start, s.end, s.cause) for s in trace.stalls))


def write_two_phase(out_dir: str, testing: PhaseReport, running: PhaseReport) -> None:
    """Reports for both phases; the CSV series describe the running phase."""
    os.makedirs(out_dir, exist_ok=True)
    write_json(os.path.join(out_dir, "testing.json"), testing.to_json())
    write_json(os.path.join(out_dir, "running.json"), running.to_json())
    write_series(out_dir, running.trace)

"""Named experiment presets at the default full-size parameters.

A preset is a list of labelled configurations.  Each one is run through the
two-phase harness on its own; sweeps simply carry one configuration per
point.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .config import ExperimentConfig
from .kernel import ArrivalProcess
from .model import MB, SimParams
from .policies import PolicyConfig
from .schedulers import SchedulerConfig

FULL_MERGE_SCHEDULERS = ("fair", "greedy", "single_threaded")
SIZE_RATIOS = tuple(range(2, 11))
# 8MB .. 32GB, doubling
PARTITION_SIZES = tuple(8 * MB << k for k in range(13))


@dataclass(frozen=True)
class Preset:
    name: str
    description: str
    variants: tuple[tuple[str, ExperimentConfig], ...]

    def get(self, label: str) -> ExperimentConfig:
        for name, cfg in self.variants:
            if name == label:
                return cfg
        raise KeyError(label)

    @property
    def labels(self) -> list[str]:
        return [name for name, _ in self.variants]


def _cfg(policy: PolicyConfig, kind: str = "fair", **sched) -> ExperimentConfig:
    return ExperimentConfig(policy=policy, scheduler=SchedulerConfig(kind=kind, **sched))


TIERING = PolicyConfig(family="tiering", size_ratio=3.0)
LEVELING = PolicyConfig(family="leveling", size_ratio=10.0)
SIZE_TIERED = PolicyConfig(family="size_tiered", st_ratio=1.2, st_min_merge=2, st_max_merge=10)
LEVELDB = PolicyConfig(family="partitioned_leveling", size_ratio=10.0)


def _schedulers(policy: PolicyConfig) -> tuple[tuple[str, ExperimentConfig], ...]:
    return tuple((kind, _cfg(policy, kind)) for kind in FULL_MERGE_SCHEDULERS)


def _size_ratio_sweep():
    out = []
    for family in ("tiering", "leveling"):
        for T in SIZE_RATIOS:
            policy = PolicyConfig(family=family, size_ratio=float(T),
                                  dynamic_level_size=family == "leveling")
            for kind in ("fair", "greedy"):
                out.append((f"{family}_T{T}_{kind}", _cfg(policy, kind)))
    return tuple(out)


def _constraints():
    out = []
    for family, policy in (("leveling", LEVELING), ("tiering", TIERING)):
        for constraint in ("global", "local"):
            for kind in ("fair", "greedy"):
                out.append((f"{family}_{constraint}_{kind}",
                            _cfg(policy, kind, constraint=constraint)))
    return tuple(out)


def _burst():
    arrivals = ArrivalProcess("open_bursty", base_rate=2000.0, base_duration=1500.0,
                              burst_rate=8000.0, burst_duration=300.0)
    base = replace(_cfg(LEVELING, "greedy"), arrivals=arrivals)
    limit = replace(base, scheduler=replace(base.scheduler, write_interaction="rate_limit",
                                            max_rate=4000.0))
    return (("no_limit", base), ("limit", limit))


def _leveldb(testing_mode: bool):
    out = []
    for selection in ("round_robin", "choose_best"):
        policy = replace(LEVELDB, selection=selection, testing_mode=testing_mode)
        out.append((selection, _cfg(policy, "single_threaded")))
    return tuple(out)


def _partition_sweep():
    out = []
    for size in PARTITION_SIZES:
        policy = replace(LEVELDB, file_max=size, testing_mode=True)
        out.append((f"file_max_{size // MB}MB", _cfg(policy, "single_threaded")))
    return tuple(out)


def _blsm():
    sim = SimParams(mem_component_size=1024 * MB // 1024)
    policy = PolicyConfig(family="leveling", size_ratio=10.0, levels=2)
    cfg = ExperimentConfig(sim=sim, policy=policy, scheduler=SchedulerConfig(kind="blsm"),
                           arrivals=ArrivalProcess("closed", clients=8))
    return (("blsm", cfg),)


_BUILDERS = {
    "tiering_base": ("tiering, T=3, under each full-merge scheduler",
                     lambda: _schedulers(TIERING)),
    "leveling_base": ("leveling, T=10, under each full-merge scheduler",
                      lambda: _schedulers(LEVELING)),
    "size_ratio_sweep": ("tiering and leveling with T from 2 to 10, fair and greedy",
                         _size_ratio_sweep),
    "constraint_local_vs_global": ("local versus global component constraints",
                                   _constraints),
    "burst_limit_vs_nolimit": ("bursty arrivals, greedy leveling, with and without a "
                               "4000/s in-memory write limit", _burst),
    "size_tiered_unfixed": ("size-tiered merges measured with unrestricted merges",
                            lambda: tuple((k, _cfg(SIZE_TIERED, k)) for k in ("fair", "greedy"))),
    "size_tiered_fixed": ("size-tiered merges measured merging the minimum number of components",
                          lambda: tuple((k, _cfg(replace(SIZE_TIERED, testing_mode=True), k))
                                        for k in ("fair", "greedy"))),
    "leveldb_unfixed": ("partitioned leveling measured with unrestricted level-0 merges",
                        lambda: _leveldb(False)),
    "leveldb_fixed": ("partitioned leveling measured merging exactly T0 level-0 components",
                      lambda: _leveldb(True)),
    "leveldb_partition_size_sweep": ("partitioned leveling with file sizes from 8MB to 32GB",
                                     _partition_sweep),
    "blsm_base": ("two-level leveling under the bLSM progress controller", _blsm),
}

PRESET_NAMES = tuple(_BUILDERS)


def preset(name: str) -> Preset:
    if name not in _BUILDERS:
        raise KeyError(f"unknown preset {name!r}; choose from {', '.join(PRESET_NAMES)}")
    description, build = _BUILDERS[name]
    variants = build()
    for _, cfg in variants:
        cfg.validate()
    return Preset(name, description, variants)

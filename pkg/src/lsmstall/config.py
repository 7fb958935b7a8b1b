"""Experiment configuration in a flat ``section.key = value`` text format.

Example::

    # leveling with greedy merges
    policy.family = leveling
    policy.size_ratio = 10
    scheduler.kind = greedy
    seed = 7

Every key has a default, unknown keys are errors, and ``dump`` writes every
key in a fixed order so that ``parse(dump(c)) == c``.
"""

from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass, field, replace
from typing import Any

from .harness import HarnessParams
from .kernel import ArrivalProcess
from .model import SimParams
from .policies import PolicyConfig, num_levels
from .schedulers import SchedulerConfig

SECTIONS = ("sim", "policy", "scheduler", "arrivals", "harness")


class ConfigError(ValueError):
    """A configuration could not be parsed or failed validation."""


@dataclass(frozen=True)
class ExperimentConfig:
    sim: SimParams = field(default_factory=SimParams)
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    scheduler: SchedulerConfig = field(default_factory=SchedulerConfig)
    arrivals: ArrivalProcess = field(default_factory=ArrivalProcess)
    harness: HarnessParams = field(default_factory=HarnessParams)
    seed: int = 0
    output_dir: str = "out"

    def validate(self) -> None:
        try:
            self.sim.validate()
            self.policy.validate()
            self.scheduler.validate()
            self.arrivals.validate()
            self.harness.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.seed < 0:
            raise ConfigError("seed must be >= 0")
        if self.sim.key_distribution == "zipf" and self.policy.family == "partitioned_leveling":
            raise ConfigError("sim.key_distribution = zipf is not supported with "
                              "policy.family = partitioned_leveling")
        if self.scheduler.kind == "blsm":
            if self.policy.family != "leveling" or num_levels(self.policy, self.sim) != 2:
                raise ConfigError("scheduler.kind = blsm requires policy.family = leveling "
                                  "with two disk levels")

    def echo(self) -> dict[str, str]:
        """Flat key -> text mapping, as written by ``dump``."""
        return dict(_items(self))


def _hints(cls) -> dict[str, Any]:
    return typing.get_type_hints(cls)


def _format(value: Any, tp: Any = None) -> str:
    if tp is float:
        return repr(float(value))
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(f"{_format(float(d))}:{_format(float(r))}" for d, r in value)
    return str(value)


def _convert(text: str, tp: Any, key: str) -> Any:
    try:
        if tp is bool:
            low = text.lower()
            if low not in ("true", "false"):
                raise ValueError
            return low == "true"
        if tp is int:
            return int(text)
        if tp is float:
            return float(text)
        if tp is str:
            return text
        # (duration, rate) segments
        if not text:
            return ()
        segs = []
        for part in text.split(","):
            d, r = part.split(":")
            segs.append((float(d), float(r)))
        return tuple(segs)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {text!r}") from None


def _items(cfg: ExperimentConfig):
    for section in SECTIONS:
        obj = getattr(cfg, section)
        hints = _hints(type(obj))
        for f in dataclasses.fields(obj):
            yield f"{section}.{f.name}", _format(getattr(obj, f.name), hints[f.name])
    yield "seed", _format(cfg.seed)
    yield "output_dir", cfg.output_dir


def dump(cfg: ExperimentConfig) -> str:
    """Canonical text: every key, one per line, in a fixed order."""
    return "".join(f"{k} = {v}".rstrip() + "\n" for k, v in _items(cfg))


def apply_overrides(cfg: ExperimentConfig, pairs: dict[str, str] | list[tuple[str, str]],
                    line_numbers: dict[str, int] | None = None) -> ExperimentConfig:
    """Return ``cfg`` with flat ``key -> text`` values applied, then validated."""
    items = pairs.items() if isinstance(pairs, dict) else pairs
    sections: dict[str, dict[str, Any]] = {s: {} for s in SECTIONS}
    top: dict[str, Any] = {}
    top_hints = _hints(ExperimentConfig)
    for key, text in items:
        where = f" (line {line_numbers[key]})" if line_numbers and key in line_numbers else ""
        if "." in key:
            section, name = key.split(".", 1)
            if section not in SECTIONS:
                raise ConfigError(f"unknown key {key!r}{where}")
            hints = _hints(type(getattr(cfg, section)))
            if name not in hints:
                raise ConfigError(f"unknown key {key!r}{where}")
            sections[section][name] = _convert(text, hints[name], key)
        elif key in ("seed", "output_dir"):
            top[key] = _convert(text, top_hints[key], key)
        else:
            raise ConfigError(f"unknown key {key!r}{where}")
    changes = {s: replace(getattr(cfg, s), **v) for s, v in sections.items() if v}
    out = replace(cfg, **changes, **top)
    out.validate()
    return out


def parse(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Parse configuration text; missing keys keep their defaults."""
    pairs: list[tuple[str, str]] = []
    lines: dict[str, int] = {}
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected 'key = value', got {raw.strip()!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {n}: missing key")
        if key in lines:
            raise ConfigError(f"line {n}: duplicate key {key!r} (first on line {lines[key]})")
        lines[key] = n
        pairs.append((key, value))
    return apply_overrides(base or ExperimentConfig(), pairs, lines)


def load(path: str) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse(fh.read())


def parse_override(text: str) -> tuple[str, str]:
    """Split a command-line ``key=value`` override."""
    if "=" not in text:
        raise ConfigError(f"override must be key=value, got {text!r}")
    key, value = (p.strip() for p in text.split("=", 1))
    return key, value


def reference() -> str:
    """Every key with its default value, for documentation."""
    return dump(ExperimentConfig())

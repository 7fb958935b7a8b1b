"""Command-line entry point: ``lsmstall <subcommand> [options]``.

Exit status is 0 on success, 1 when the configuration or arguments are
invalid, and 2 when a verified property fails.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from typing import Sequence

from . import checks
from .config import ConfigError, ExperimentConfig, apply_overrides, dump, load, parse_override
from .harness import (
    load_tree,
    running_phase,
    testing_phase,
    testing_scheduler,
    two_phase,
    write_json,
    write_series,
    write_two_phase,
)
from .kernel import SimulationError, run_sim
from .model import MB
from .presets import PRESET_NAMES, preset

SWEEP_AXES = ("rho", "size_ratio", "file_max")

log = logging.getLogger("lsmstall")


class UsageError(ValueError):
    pass


def _config(args) -> ExperimentConfig:
    cfg = load(args.config) if args.config else ExperimentConfig()
    if args.set:
        cfg = apply_overrides(cfg, [parse_override(s) for s in args.set])
    return cfg


def _out(args, cfg: ExperimentConfig) -> str:
    return args.out or cfg.output_dir


def _echo(cfg: ExperimentConfig) -> dict[str, str]:
    return cfg.echo()


def _two_phase(cfg: ExperimentConfig, out_dir: str) -> None:
    arrivals = cfg.arrivals if cfg.arrivals.kind in ("open_bursty", "open_piecewise") else None
    testing, running = two_phase(cfg.sim, cfg.policy, cfg.scheduler, cfg.harness, arrivals,
                                 config_echo=_echo(cfg))
    write_two_phase(out_dir, testing, running)
    for rep in (testing, running):
        for w in rep.warnings:
            print(f"warning ({rep.phase}): {w}", file=sys.stderr)
    print(f"{out_dir}: W={testing.measured_W:.1f}/s stall_fraction={running.stall_fraction:.4f} "
          f"p99={running.p99():.4g}s")


def cmd_simulate(args) -> int:
    cfg = _config(args)
    out = _out(args, cfg)
    trace = run_sim(cfg.sim, cfg.policy, cfg.scheduler, cfg.arrivals, seed=cfg.seed,
                    window=cfg.harness.window, config_echo=_echo(cfg))
    os.makedirs(out, exist_ok=True)
    write_json(os.path.join(out, "trace.json"), trace.to_json())
    write_series(out, trace)
    print(f"{out}: processed {trace.processed():.0f} writes, {len(trace.stalls)} stalls")
    return 0


def cmd_two_phase(args) -> int:
    cfg = _config(args)
    _two_phase(cfg, _out(args, cfg))
    return 0


def parse_values(text: str, axis: str) -> list[float]:
    """``a..b`` (integer steps), ``a..b:step`` or a comma list."""
    text = text.strip()
    if ".." in text:
        lo, _, rest = text.partition("..")
        hi, _, step = rest.partition(":")
        try:
            a, b = float(lo), float(hi)
            d = float(step) if step else 1.0
        except ValueError:
            raise UsageError(f"bad range {text!r}") from None
        if d <= 0 or b < a:
            raise UsageError(f"bad range {text!r}")
        n = int(round((b - a) / d))
        values = [a + k * d for k in range(n + 1)]
    else:
        try:
            values = [float(v) for v in text.split(",") if v.strip()]
        except ValueError:
            raise UsageError(f"bad value list {text!r}") from None
    if not values:
        raise UsageError("no sweep values given")
    return values


def _label(value: float) -> str:
    return str(int(value)) if float(value).is_integer() else repr(value)


def cmd_sweep(args) -> int:
    cfg = _config(args)
    out = _out(args, cfg)
    values = parse_values(args.values, args.axis)
    if args.axis == "rho":
        for v in values:
            if not 0 < v < 1:
                raise ConfigError(f"utilization {v} outside (0, 1)")
        loaded = load_tree(cfg.sim, cfg.policy, cfg.scheduler)
        testing = testing_phase(cfg.sim, cfg.policy, testing_scheduler(cfg.policy, cfg.scheduler),
                                cfg.harness, loaded, _echo(cfg))
        for v in values:
            point = os.path.join(out, f"rho_{_label(v)}")
            running = running_phase(cfg.sim, cfg.policy, cfg.scheduler, testing.measured_W, v,
                                    cfg.harness, loaded, config_echo=_echo(cfg))
            write_two_phase(point, testing, running)
            print(f"{point}: stall_fraction={running.stall_fraction:.4f} p99={running.p99():.4g}s")
        return 0
    for v in values:
        if args.axis == "size_ratio":
            pcfg = apply_overrides(cfg, {"policy.size_ratio": repr(float(v))})
            point = os.path.join(out, f"size_ratio_{_label(v)}")
        else:
            # file sizes are given in MB
            pcfg = apply_overrides(cfg, {"policy.file_max": str(int(v * MB))})
            point = os.path.join(out, f"file_max_{_label(v)}MB")
        _two_phase(pcfg, point)
    return 0


def cmd_preset(args) -> int:
    p = preset(args.name)
    variants = p.variants
    if args.variant:
        variants = ((args.variant, p.get(args.variant)),)
    if not args.run:
        if args.variant:
            sys.stdout.write(dump(variants[0][1]))
        else:
            for label, cfg in variants:
                sys.stdout.write(f"# variant {label}\n{dump(cfg)}\n")
        return 0
    out = args.out or os.path.join("out", p.name)
    for label, cfg in variants:
        if args.set:
            cfg = apply_overrides(cfg, [parse_override(s) for s in args.set])
        _two_phase(cfg, os.path.join(out, label))
    return 0


def cmd_verify(args) -> int:
    failed = 0
    for result in checks.property_suite(seed=args.seed, quick=args.quick):
        print(result.line())
        failed += not result.passed
    return 2 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lsmstall", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", help="configuration file (section.key = value lines)")
            p.add_argument("--set", action="append", metavar="KEY=VALUE",
                           help="override one key; repeatable, applied after --config")
        p.add_argument("--out", help="output directory (default: output_dir from the config)")

    p = sub.add_parser("simulate", help="one kernel run over a freshly loaded tree")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("two-phase", help="testing phase, then running phase at rho * W")
    common(p)
    p.set_defaults(func=cmd_two_phase)

    p = sub.add_parser("sweep", help="two-phase runs along one axis")
    common(p)
    p.add_argument("--axis", required=True, choices=SWEEP_AXES)
    p.add_argument("--values", required=True,
                   help="a..b, a..b:step or a comma list (file_max in MB)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("preset", help="dump or run a named preset")
    p.add_argument("name", choices=PRESET_NAMES)
    p.add_argument("--variant", help="restrict to one variant label")
    p.add_argument("--run", action="store_true", help="run every variant instead of dumping")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--out")
    p.set_defaults(func=cmd_preset)

    p = sub.add_parser("verify", help="run the property suites")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--quick", action="store_true", help="smaller instances")
    p.set_defaults(func=cmd_verify)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, stream=sys.stderr, format="%(levelname)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    try:
        return args.func(args)
    except (ConfigError, UsageError, KeyError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return 1
    except SimulationError as exc:
        print(f"simulation failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

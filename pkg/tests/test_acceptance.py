"""Acceptance criteria, each at its stated tolerance.

Every criterion has a runner that writes its report files into a
directory and returns ``(passed, detail)``.  The last test repeats every
runner and compares the report files byte for byte.  A one-line verdict per
criterion is printed at the end of the session.
"""

from __future__ import annotations

import filecmp
import os
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE, RUNS
from lsmstall import checks
from lsmstall import harness as h
from lsmstall.config import ExperimentConfig
from lsmstall.policies import num_levels
from lsmstall.presets import preset

SEED = 0
SCHEDULERS = ("fair", "greedy", "single_threaded")


def record(n: int, runner, out_dir: str) -> tuple[bool, str]:
    os.makedirs(out_dir, exist_ok=True)
    passed, detail = runner(out_dir)
    ACCEPTANCE[n] = (passed, detail)
    RUNS.setdefault(n, (runner, out_dir))
    print(f"{'PASS' if passed else 'FAIL'} criterion {n}: {detail}")
    return passed, detail


def write_check(out_dir: str, result: checks.CheckResult) -> tuple[bool, str]:
    with open(os.path.join(out_dir, "report.txt"), "w") as fh:
        fh.write(result.line() + "\n")
    return result.passed, result.detail


def run_variant(cfg: ExperimentConfig, out_dir: str):
    """Two-phase run of one configuration; reports land in ``out_dir``."""
    arrivals = cfg.arrivals if cfg.arrivals.kind in ("open_bursty", "open_piecewise") else None
    testing, running = h.two_phase(cfg.sim, cfg.policy, cfg.scheduler, cfg.harness, arrivals,
                                 config_echo=cfg.echo())
    h.write_two_phase(out_dir, testing, running)
    return testing, running


def ratio(a: float, b: float) -> float:
    """a / b with 0 / 0 read as 1 (neither run queues any write)."""
    if b == 0:
        return 1.0 if a == 0 else float("inf")
    return a / b


# ---------------------------------------------------------------------------
# Property suites
# ---------------------------------------------------------------------------


def c1(out):
    t = time.perf_counter()
    r = checks.latency_dominance(traces=100, seed=SEED)
    elapsed = time.perf_counter() - t
    passed, detail = write_check(out, r)
    return passed and elapsed < 60, f"{detail}; {elapsed:.0f}s (limit 60s)"


def c2(out):
    t = time.perf_counter()
    r = checks.greedy_static_optimality(max_count=5)
    elapsed = time.perf_counter() - t
    passed, detail = write_check(out, r)
    return passed and elapsed < 300, f"{detail}; {elapsed:.0f}s (limit 300s)"


def c3(out):
    return write_check(out, checks.greedy_counterexample())


def c4(out):
    return write_check(out, checks.dedup_agreement(points=20, seed=SEED))


def c5(out):
    return write_check(out, checks.queue_agreement(schedules=50, seed=SEED))


# ---------------------------------------------------------------------------
# Experiments at default scale
# ---------------------------------------------------------------------------


def c6(out):
    notes, ok = [], True
    for name, tol, formula in (("tiering_base", 0.20, lambda B, T, L: B / L),
                               ("leveling_base", 0.30, lambda B, T, L: 2 * B / (T * L))):
        cfg = preset(name).get("fair")
        T, L = cfg.policy.size_ratio, num_levels(cfg.policy, cfg.sim)
        expect = formula(cfg.sim.bandwidth, T, L)
        t = time.perf_counter()
        loaded = h.load_tree(cfg.sim, cfg.policy, cfg.scheduler)
        rep = h.testing_phase(cfg.sim, cfg.policy, cfg.scheduler, cfg.harness, loaded,
                            cfg.echo())
        elapsed = time.perf_counter() - t
        h.write_json(os.path.join(out, f"{name}_testing.json"), rep.to_json())
        err = rep.measured_W / expect - 1
        good = abs(err) <= tol and elapsed < 10
        ok &= good
        notes.append(f"{cfg.policy.family} T={T:g} L={L}: W={rep.measured_W:.0f} vs "
                     f"{expect:.0f} ({err:+.1%}, limit ±{tol:.0%}) in {elapsed:.1f}s")
    return ok, "; ".join(notes)


def _scheduler_runs(name, out):
    runs = {}
    for kind in SCHEDULERS:
        runs[kind] = run_variant(preset(name).get(kind), os.path.join(out, name, kind))[1]
    return runs


def c7(out):
    tier = _scheduler_runs("tiering_base", out)
    lev = _scheduler_runs("leveling_base", out)
    sf = {k: r.stall_fraction for k, r in tier.items()}
    p99 = {k: r.p99() for k, r in tier.items()}
    a = (sf["fair"] == 0 and sf["greedy"] == 0 and sf["single_threaded"] > 0.05
         and p99["single_threaded"] >= 10 * p99["fair"])
    lsf = {k: r.stall_fraction for k, r in lev.items()}
    lp99 = {k: r.p99() for k, r in lev.items()}
    worst = all(lsf["single_threaded"] > lsf[k] and lp99["single_threaded"] > lp99[k]
                for k in ("fair", "greedy"))
    b = lsf["greedy"] == 0 and lsf["fair"] > 0 and worst
    fmt = lambda s, p: ", ".join(f"{k} stall {s[k]:.4f} p99 {p[k]:.3g}s" for k in SCHEDULERS)
    return a and b, (f"tiering [{'ok' if a else 'FAIL'}] {fmt(sf, p99)}; "
                     f"leveling [{'ok' if b else 'FAIL'}] {fmt(lsf, lp99)}")


def c8(out):
    p = preset("constraint_local_vs_global")
    p99 = {}
    for label, cfg in p.variants:
        p99[label] = run_variant(cfg, os.path.join(out, label))[1].p99()
    ok, notes = True, []
    for family in ("leveling", "tiering"):
        for kind in ("fair", "greedy"):
            loc, glob = p99[f"{family}_local_{kind}"], p99[f"{family}_global_{kind}"]
            r = ratio(loc, glob)
            good = r >= 2 if family == "leveling" else 0.5 <= r <= 2
            ok &= good
            notes.append(f"{family}/{kind} local {loc:.3g}s global {glob:.3g}s "
                         f"ratio {r:.3g} [{'ok' if good else 'FAIL'}]")
    return ok, "; ".join(notes)


def c9(out):
    p = preset("burst_limit_vs_nolimit")
    free = run_variant(p.get("no_limit"), os.path.join(out, "no_limit"))[1]
    lim = run_variant(p.get("limit"), os.path.join(out, "limit"))[1]
    qs = np.linspace(0.5, 1.0, 101)
    aligned = all(free.latency.quantile(q) <= lim.latency.quantile(q) + 1e-9 for q in qs)
    ok = not lim.trace.stalls and lim.p99() > free.p99() and aligned
    return ok, (f"limit: {len(lim.trace.stalls)} stalls, p99 {lim.p99():.3g}s; no limit: "
                f"{len(free.trace.stalls)} stalls, p99 {free.p99():.3g}s; no-limit quantiles "
                f"<= limit quantiles from p50 up: {aligned}")


def _growing(trace) -> bool:
    counts = [n for _, n in trace.components]
    if len(counts) < 8:
        return False
    quarters = [max(counts[k * len(counts) // 4:(k + 1) * len(counts) // 4]) for k in range(4)]
    return all(b >= a for a, b in zip(quarters, quarters[1:])) and quarters[-1] > quarters[0]


def _fix_runs(pairs, out):
    """Measure W with and without the fix, then run at 95% of each.

    ``pairs`` holds (label, unrestricted config, fixed config).  Returns
    ({label: (W unrestricted, W fixed)}, {label: (run at 0.95 W_unrestricted,
    run at 0.95 W_fixed)}).
    """
    W, runs = {}, {}
    for label, cfg_u, cfg_f in pairs:
        where = os.path.join(out, label)
        os.makedirs(where, exist_ok=True)
        loaded = h.load_tree(cfg_u.sim, cfg_u.policy, cfg_u.scheduler)
        measured = []
        for tag, cfg in (("unrestricted", cfg_u), ("fixed", cfg_f)):
            rep = h.testing_phase(cfg.sim, cfg.policy, h.testing_scheduler(cfg.policy, cfg.scheduler),
                                cfg.harness, loaded, cfg.echo())
            h.write_json(os.path.join(where, f"testing_{tag}.json"), rep.to_json())
            measured.append(rep.measured_W)
        W[label] = tuple(measured)
        reps = []
        for tag, w in zip(("unrestricted", "fixed"), measured):
            rep = h.running_phase(cfg_u.sim, cfg_u.policy, cfg_u.scheduler, w, 0.95,
                                cfg_u.harness, loaded, config_echo=cfg_u.echo())
            h.write_json(os.path.join(where, f"running_at_{tag}_W.json"), rep.to_json())
            reps.append(rep)
        runs[label] = tuple(reps)
    return W, runs


def c10(out):
    unfixed, fixed = preset("size_tiered_unfixed"), preset("size_tiered_fixed")
    kinds = ("fair", "greedy")
    W, runs = _fix_runs([(k, unfixed.get(k), fixed.get(k)) for k in kinds], out)
    ok, notes = True, []
    for kind in kinds:
        wu, wf = W[kind]
        hot, cool = runs[kind]
        over = hot.stall_fraction > 0 or _growing(hot.trace)
        good = 0.35 <= wf / wu <= 0.70 and over and cool.stall_fraction == 0
        ok &= good
        notes.append(f"{kind}: W fixed/unrestricted {wf:.0f}/{wu:.0f} = {wf / wu:.3f}; stall at "
                     f"0.95 W_unrestricted {hot.stall_fraction:.4f}, at 0.95 W_fixed "
                     f"{cool.stall_fraction:.4f} [{'ok' if good else 'FAIL'}]")
    return ok, "; ".join(notes)


def c11(out):
    unfixed, fixed = preset("leveldb_unfixed"), preset("leveldb_fixed")
    labels = unfixed.labels
    W, runs = _fix_runs([(s, unfixed.get(s), fixed.get(s)) for s in labels], out)
    ok, notes = True, []
    for selection in labels:
        wu, wf = W[selection]
        drop = 1 - wf / wu
        hot, cool = runs[selection]
        good = 0.20 <= drop <= 0.45 and hot.stall_fraction > 0 and cool.stall_fraction == 0
        ok &= good
        notes.append(f"{selection}: W fixed {wf:.0f} vs unrestricted {wu:.0f} ({drop:.1%} lower); "
                     f"stall at 0.95 W_unrestricted {hot.stall_fraction:.4f}, at 0.95 W_fixed "
                     f"{cool.stall_fraction:.4f} [{'ok' if good else 'FAIL'}]")
    return ok, "; ".join(notes)


def c12(out):
    W, p99 = {}, {}
    for label, cfg in preset("leveldb_partition_size_sweep").variants:
        testing, running = run_variant(cfg, os.path.join(out, label))
        W[label], p99[label] = testing.measured_W, running.p99()
    spread = (max(W.values()) - min(W.values())) / max(W.values())
    big, ref = p99["file_max_32768MB"], p99["file_max_64MB"]
    r = ratio(big, ref)
    ok = spread < 0.25 and r >= 10
    Ws = ", ".join(f"{k.removeprefix('file_max_')} {v:.0f}" for k, v in W.items())
    return ok, (f"W spread {spread:.1%} (limit 25%) [{Ws}]; p99 32GB {big:.3g}s vs 64MB "
                f"{ref:.3g}s, ratio {r:.3g} (need >= 10)")


def c13(out):
    _, running = run_variant(preset("blsm_base").get("blsm"), out)
    proc = running.latency.quantile(0.99, processing=True)
    write = running.p99()
    ok = proc < 1 and write >= 10 * proc
    return ok, f"processing p99 {proc:.3g}s (need < 1), write p99 {write:.3g}s (need >= {10 * proc:.3g}s)"


RUNNERS = {1: c1, 2: c2, 3: c3, 4: c4, 5: c5, 6: c6, 7: c7, 8: c8, 9: c9, 10: c10,
           11: c11, 12: c12, 13: c13}


@pytest.mark.parametrize("n", sorted(RUNNERS))
def test_criterion(n, acceptance_dir):
    passed, detail = record(n, RUNNERS[n], str(acceptance_dir / "first" / f"c{n}"))
    assert passed, detail


def _same_tree(a: str, b: str) -> list[str]:
    diffs = []
    for root, _, files in os.walk(a):
        for f in files:
            pa = os.path.join(root, f)
            pb = os.path.join(b, os.path.relpath(pa, a))
            if not os.path.exists(pb) or not filecmp.cmp(pa, pb, shallow=False):
                diffs.append(os.path.relpath(pa, a))
    for root, _, files in os.walk(b):
        for f in files:
            if not os.path.exists(os.path.join(a, os.path.relpath(os.path.join(root, f), b))):
                diffs.append(os.path.relpath(os.path.join(root, f), b))
    return diffs


def test_criterion_14_determinism(acceptance_dir):
    """Repeat every criterion's runs and compare the report files byte for byte."""
    files, diffs = 0, []
    for n in sorted(RUNNERS):
        first = str(acceptance_dir / "first" / f"c{n}")
        if n not in RUNS:
            record(n, RUNNERS[n], first)
        again = str(acceptance_dir / "second" / f"c{n}")
        os.makedirs(again, exist_ok=True)
        RUNNERS[n](again)
        files += sum(len(fs) for _, _, fs in os.walk(first))
        diffs += [f"c{n}/{d}" for d in _same_tree(first, again)]
    passed = files > 0 and not diffs
    detail = f"{files} report files compared, {len(diffs)} differ"
    if diffs:
        detail += ": " + ", ".join(diffs[:10])
    ACCEPTANCE[14] = (passed, detail)
    print(f"{'PASS' if passed else 'FAIL'} criterion 14: {detail}")
    assert passed, detail

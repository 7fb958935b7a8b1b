from __future__ import annotations

import json

import pytest

from lsmstall.cli import main, parse_values
from lsmstall.cli import UsageError
from lsmstall.config import parse

SMALL = [
    "--set", "sim.mem_component_size=1000", "--set", "sim.bandwidth=10000",
    "--set", "sim.keyspace=100000", "--set", "sim.dataset_size=20000",
    "--set", "policy.family=tiering", "--set", "policy.size_ratio=3",
    "--set", "harness.test_duration=200", "--set", "harness.warmup=50",
    "--set", "harness.run_duration=100",
]


def test_parse_values():
    assert parse_values("2..4", "size_ratio") == [2.0, 3.0, 4.0]
    assert parse_values("0.5..0.7:0.1", "rho") == pytest.approx([0.5, 0.6, 0.7])
    assert parse_values("8,64", "file_max") == [8.0, 64.0]
    with pytest.raises(UsageError):
        parse_values("4..2", "rho")


def test_two_phase_writes_reports(tmp_path, capsys):
    assert main(["two-phase", *SMALL, "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "running.json").read_text())
    assert rep["phase"] == "running"
    assert "W=" in capsys.readouterr().out


def test_rerun_is_byte_identical(tmp_path):
    for d in ("a", "b"):
        assert main(["simulate", *SMALL, "--set", "arrivals.duration=60",
                     "--out", str(tmp_path / d)]) == 0
    for name in ("trace.json", "throughput.csv", "components.csv", "stalls.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_rho_sweep_dirs(tmp_path):
    assert main(["sweep", *SMALL, "--axis", "rho", "--values", "0.5,0.9",
                 "--out", str(tmp_path)]) == 0
    assert sorted(p.name for p in tmp_path.iterdir()) == ["rho_0.5", "rho_0.9"]


def test_bad_config_exits_one(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("policy.size_ratio = banana\n")
    assert main(["simulate", "--config", str(cfg)]) == 1
    assert "bad value" in capsys.readouterr().err


def test_unknown_subcommand_exits_one():
    assert main(["frobnicate"]) == 1


def test_preset_dump_parses(capsys):
    assert main(["preset", "leveling_base", "--variant", "greedy"]) == 0
    cfg = parse(capsys.readouterr().out)
    assert cfg.scheduler.kind == "greedy" and cfg.policy.size_ratio == 10.0


def test_verify_reports_lines(monkeypatch, capsys):
    from lsmstall import checks
    monkeypatch.setattr(checks, "property_suite", lambda seed, quick: [
        checks.CheckResult("a", True, "ok"), checks.CheckResult("b", False, "bad")])
    assert main(["verify", "--quick"]) == 2
    assert capsys.readouterr().out.splitlines() == ["PASS a: ok", "FAIL b: bad"]

"""Tests for the command-line interface."""

from __future__ import annotations

import pytest
from typer.testing import CliRunner

from hbfopt import cli
from hbfopt.channel import read_channel_dump
from hbfopt.cli import EXIT_INVARIANT_ABORT, EXIT_IO_ERROR, EXIT_SPEC_ERROR, app, parse_overrides
from hbfopt.errors import ConfigurationError
from hbfopt.selftest import CheckResult

runner = CliRunner()

SPEC_TOML = """
[system]
n_tx = 16
n_rx = 8
n_tx_rf = 4
n_rx_rf = 2
n_streams = 2
n_subcarriers = 4

[channel]
n_clusters = 3
n_rays = 4

[solver]
outer_cap = 2

[experiment]
snr_grid = [-6.0]
variants = ["wmmse-ei", "mmse-ei"]
n_realizations = 2
init_strategy = "random"
concurrency = 1
"""


@pytest.fixture
def spec_file(tmp_path):
    path = tmp_path / "spec.toml"
    path.write_text(SPEC_TOML, encoding="utf-8")
    return path


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    for name in ("HBFOPT_CONFIG", "HBFOPT_OUTPUT_DIR", "HBFOPT_CONCURRENCY", "HBFOPT_N_REALIZATIONS", "HBFOPT_DEBUG"):
        monkeypatch.delenv(name, raising=False)


def test_parse_overrides():
    assert parse_overrides(["--snr-grid", "[0.0, 2.0]", "--outer_cap=4", "--write-traces"]) == {
        "snr-grid": [0.0, 2.0],
        "outer_cap": 4,
        "write-traces": True,
    }
    with pytest.raises(ConfigurationError):
        parse_overrides(["stray"])


def test_run_writes_outputs(tmp_path, spec_file):
    run_dir = tmp_path / "run"
    result = runner.invoke(app, ["run", str(spec_file), "--run-dir", str(run_dir), "--snr-grid", "[-6.0, 0.0]"])
    assert result.exit_code == 0, result.output
    lines = (run_dir / "results.csv").read_text(encoding="utf-8").splitlines()
    assert len(lines) == 1 + 2 * 2 * 2
    assert (run_dir / "manifest.json").exists()
    assert (run_dir / "summary.md").exists()


def test_rerun_from_manifest(tmp_path, spec_file):
    first = tmp_path / "first"
    second = tmp_path / "second"
    assert runner.invoke(app, ["run", str(spec_file), "--run-dir", str(first), "--no-summary"]).exit_code == 0
    result = runner.invoke(app, ["run", str(first / "manifest.json"), "--run-dir", str(second), "--no-summary"])
    assert result.exit_code == 0, result.output
    assert (first / "results.csv").read_bytes() == (second / "results.csv").read_bytes()
    assert not (second / "summary.md").exists()


def test_run_missing_spec(tmp_path):
    result = runner.invoke(app, ["run", str(tmp_path / "absent.toml")])
    assert result.exit_code == EXIT_SPEC_ERROR


@pytest.mark.parametrize("override", [["--no-such-field", "1"], ["--n-realizations", "0"]])
def test_run_bad_override(tmp_path, spec_file, override):
    result = runner.invoke(app, ["run", str(spec_file), "--run-dir", str(tmp_path / "run"), *override])
    assert result.exit_code == EXIT_SPEC_ERROR


def test_run_unwritable_directory(tmp_path, spec_file):
    blocker = tmp_path / "run"
    blocker.write_text("occupied", encoding="utf-8")
    result = runner.invoke(app, ["run", str(spec_file), "--run-dir", str(blocker)])
    assert result.exit_code == EXIT_IO_ERROR


def test_channel_dump(tmp_path, spec_file):
    output = tmp_path / "channel.bin"
    result = runner.invoke(app, ["channel-dump", "--output", str(output), "--seed", "7", "--spec", str(spec_file)])
    assert result.exit_code == 0, result.output
    matrices, seed = read_channel_dump(output)
    assert matrices.shape == (4, 8, 16)
    assert seed == 7


def test_complexity_reference_table():
    result = runner.invoke(app, ["complexity"])
    assert result.exit_code == 0, result.output
    assert "WMMSE-EI" in result.output


def test_complexity_single_variant():
    result = runner.invoke(app, ["complexity", "--variant", "wmmse-ei-q:2", "--n-in", "3", "--n-out", "10"])
    assert result.exit_code == 0, result.output


@pytest.mark.parametrize(
    "args",
    [["--variant", "wmmse-ei-q"], ["--variant", "wmmse-ei-q:2"], ["--n-ant", "0"], ["--variant", "zf"]],
)
def test_complexity_bad_input(args):
    result = runner.invoke(app, ["complexity", *args])
    assert result.exit_code == EXIT_SPEC_ERROR


def test_selftest_failure_exit_code(monkeypatch):
    monkeypatch.setattr(cli, "run_selftest", lambda seed: [CheckResult("power", False, "off by 1")])
    result = runner.invoke(app, ["selftest"])
    assert result.exit_code == EXIT_INVARIANT_ABORT


def test_selftest_success_exit_code(monkeypatch):
    monkeypatch.setattr(cli, "run_selftest", lambda seed: [CheckResult("power", True, "ok")])
    assert runner.invoke(app, ["selftest"]).exit_code == 0


@pytest.mark.slow
def test_selftest_passes():
    result = runner.invoke(app, ["selftest", "--seed", "0"])
    assert result.exit_code == 0, result.output

import json
from pathlib import Path

import pytest
import typer
from click.testing import Result
from typer.testing import CliRunner

from app.zk import EXIT_CONFIG, EXIT_OK, ZKAppWrapper
from models.errors import GridError
from storage.records import read_diagnostics_csv, read_sweep_csv, verify_manifest

app: ZKAppWrapper = ZKAppWrapper()
runner: CliRunner = CliRunner()

ZERO_RUN: str = """
[grid]
d = 1
nx = 8
ny = 4

[run]
t_end = 0.01
record_interval = 0.005
snapshot_interval = 2
"""

SMALL_BVP: str = """
[bvp]
n = 64
source = "constant"
coefficients = [6.0]
epsilons = [0.1, 0.01, 0.001]
"""


def write_config(directory: Path, text: str) -> Path:
    path: Path = directory / "config.toml"
    path.write_text(text, encoding="utf-8")
    return path


def test_run_writes_diagnostics_and_manifest(tmp_path: Path):
    """
    Tests that run exits 0 and leaves a verified output directory.

    The zero state is integrated to t_end and recorded at 0, 0.005 and 0.01.
    """
    out: Path = tmp_path / "out"
    result: Result = runner.invoke(app, ["run", "--config", str(write_config(tmp_path, ZERO_RUN)), "--out", str(out)])
    assert result.exit_code == EXIT_OK, result.output
    assert len(read_diagnostics_csv(out / "diagnostics.csv")) == 3
    assert (out / "snapshots.csv").is_file()
    assert (out / "snapshot_00000000.zkf").is_file()
    assert verify_manifest(out) == []


def test_verify_replays_snapshots(tmp_path: Path):
    """The zero trajectory passes every check from its stored snapshots."""
    config: str = str(write_config(tmp_path, ZERO_RUN))
    out: Path = tmp_path / "out"
    assert runner.invoke(app, ["run", "-c", config, "-o", str(out)]).exit_code == EXIT_OK

    report_dir: Path = tmp_path / "verify"
    result: Result = runner.invoke(app, ["verify", "-c", config, "--snapshots", str(out), "-o", str(report_dir)])
    assert result.exit_code == EXIT_OK, result.output
    summary: dict = json.loads((report_dir / "verification.json").read_text(encoding="utf-8"))
    assert summary["bound"]["passed"]


def test_verify_without_snapshot_index(tmp_path: Path):
    """A directory without snapshots.csv is a configuration error."""
    config: str = str(write_config(tmp_path, ZERO_RUN))
    result: Result = runner.invoke(app, ["verify", "-c", config, "--snapshots", str(tmp_path)])
    assert result.exit_code == EXIT_CONFIG


def test_bad_config_exits_with_config_code(tmp_path: Path):
    """An unknown key is reported and the exit code is 2."""
    config: Path = write_config(tmp_path, "[grid]\nnx = 32\nwidth = 3\n")
    result: Result = runner.invoke(app, ["run", "--config", str(config), "--out", str(tmp_path / "out")])
    assert result.exit_code == EXIT_CONFIG
    assert not (tmp_path / "out").exists()


def test_missing_config_file(tmp_path: Path):
    result: Result = runner.invoke(app, ["bvp", "--config", str(tmp_path / "absent.toml")])
    assert result.exit_code == EXIT_CONFIG


def test_bvp_writes_sweep_table(tmp_path: Path):
    out: Path = tmp_path / "bvp"
    result: Result = runner.invoke(app, ["bvp", "-c", str(write_config(tmp_path, SMALL_BVP)), "-o", str(out)])
    assert result.exit_code == EXIT_OK, result.output
    assert [r.epsilon for r in read_sweep_csv(out / "sweep.csv")] == [0.1, 0.01, 0.001]


def test_mms_rejects_the_zero_solution(tmp_path: Path):
    config: Path = write_config(tmp_path, '[mms]\nsolution = "zero"\n')
    result: Result = runner.invoke(app, ["mms", "-c", str(config), "-o", str(tmp_path / "mms")])
    assert result.exit_code == EXIT_CONFIG


def test_threads_option_is_validated(tmp_path: Path):
    """--threads takes a positive count."""
    config: str = str(write_config(tmp_path, ZERO_RUN))
    result: Result = runner.invoke(app, ["run", "-c", config, "-o", str(tmp_path / "out"), "--threads", "0"])
    assert result.exit_code != EXIT_OK


def test_manufactured_preset_without_manufactured_forcing(tmp_path: Path):
    """The mismatch is a configuration error, not a crash."""
    config: Path = write_config(tmp_path, ZERO_RUN + '\n[initial]\npreset = "manufactured"\n')
    result: Result = runner.invoke(app, ["run", "-c", str(config), "-o", str(tmp_path / "out")])
    assert result.exit_code == EXIT_CONFIG


def test_invalid_input_maps_to_the_config_code():
    """A grid or field error raised inside a command exits 2."""

    def action() -> int:
        raise GridError("field shape (3,) does not match grid shape (9, 4)")

    with pytest.raises(typer.Exit) as caught:
        app._execute(action)
    assert caught.value.exit_code == EXIT_CONFIG


def test_verify_writes_its_summary_next_to_the_snapshots(tmp_path: Path):
    """Without --out the summary lands in the replayed run directory."""
    config: str = str(write_config(tmp_path, ZERO_RUN))
    out: Path = tmp_path / "out"
    assert runner.invoke(app, ["run", "-c", config, "-o", str(out)]).exit_code == EXIT_OK

    result: Result = runner.invoke(app, ["verify", "-c", config, "--snapshots", str(out)])
    assert result.exit_code == EXIT_OK, result.output
    assert (out / "verification.json").is_file()

import csv

import pytest
from click.testing import CliRunner
from sqlalchemy import create_engine
from sqlalchemy.orm import Session

from main import cli
from models import MetricPoint, Run

CONFIG = """\
[run]
env = line
seed = 0

[train]
batches = 4
batch_size = 4
hidden = 16
layers = 2
checkpoint_every = 2

[metadynamics]
walkers = 8
iterations = 10
report_every = 5

[evaluation]
every = 2
samples = 200
"""


@pytest.fixture(autouse=True)
def _local_registry(monkeypatch):
    monkeypatch.delenv("DATABASE_URL", raising=False)


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "line.ini"
    path.write_text(CONFIG)
    return path


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_run_campaign(tmp_path, config_file):
    out = tmp_path / "campaign"
    result = CliRunner().invoke(cli, ["run", str(config_file), "--out", str(out), "--repeats", "2", "--seed", "7"])
    assert result.exit_code == 0, result.output
    assert "2 run(s)" in result.output

    for s in (7, 8):
        assert len(_rows(out / f"seed_{s}" / "metrics.csv")) == 2
    summary = _rows(out / "summary.csv")
    assert [int(r["episode"]) for r in summary] == [2, 4]
    assert all(r["runs"] == "2" for r in summary)
    seeds = _rows(out / "seeds.csv")
    assert sorted(int(r["seed"]) for r in seeds) == [7, 8]
    assert (out / "effective_config.ini").exists()

    engine = create_engine(f"sqlite:///{out / 'registry.sqlite'}")
    with Session(engine) as db:
        runs = db.query(Run).order_by(Run.seed).all()
        assert [(r.seed, r.status) for r in runs] == [(7, "FINISHED"), (8, "FINISHED")]
        assert runs[0].run_id == "line-tb-on_policy"
        assert db.query(MetricPoint).count() == 4


def test_echoed_config_reproduces_metrics(tmp_path, config_file):
    runner = CliRunner()
    first = tmp_path / "first"
    assert runner.invoke(cli, ["run", str(config_file), "--out", str(first), "--no-wall-time"]).exit_code == 0
    echo = tmp_path / "echo.ini"
    echo.write_text((first / "effective_config.ini").read_text())
    second = tmp_path / "second"
    assert runner.invoke(cli, ["run", str(echo), "--out", str(second)]).exit_code == 0

    metrics = [root / "seed_0" / "metrics.csv" for root in (first, second)]
    assert metrics[0].read_bytes() == metrics[1].read_bytes()
    assert all(r["wall_ms"] == "0.000" for r in _rows(metrics[0]))


def test_same_seed_reruns_are_byte_identical(tmp_path, config_file):
    config_file.write_text(CONFIG.replace("seed = 0\n", "seed = 0\nwall_time = false\n"))
    runner = CliRunner()
    for name in ("a", "b"):
        assert runner.invoke(cli, ["run", str(config_file), "--out", str(tmp_path / name)]).exit_code == 0
    for f in ("metrics.csv", "replay_buffer.csv"):
        assert (tmp_path / "a" / "seed_0" / f).read_bytes() == (tmp_path / "b" / "seed_0" / f).read_bytes()
    assert (tmp_path / "a" / "summary.csv").read_bytes() == (tmp_path / "b" / "summary.csv").read_bytes()


def test_zero_batches_campaign(tmp_path, config_file):
    out = tmp_path / "empty"
    result = CliRunner().invoke(cli, ["run", str(config_file), "--out", str(out), "--batches", "0"])
    assert result.exit_code == 0, result.output
    assert (out / "seed_0" / "checkpoint_000000.pt").exists()
    assert _rows(out / "summary.csv") == []


def test_unknown_env_exits_with_three(tmp_path):
    path = tmp_path / "bad.ini"
    path.write_text("[run]\nenv = ring\n")
    result = CliRunner().invoke(cli, ["run", str(path), "--out", str(tmp_path / "out")])
    assert result.exit_code == 3
    assert "line, grid, torus" in result.output


def test_unparseable_config_exits_with_two(tmp_path):
    path = tmp_path / "bad.ini"
    path.write_text("env = line\n")
    assert CliRunner().invoke(cli, ["run", str(path)]).exit_code == 2


def test_sample_am_command(tmp_path, config_file):
    out = tmp_path / "am"
    result = CliRunner().invoke(cli, ["sample-am", str(config_file), "--out", str(out), "--batches", "6"])
    assert result.exit_code == 0, result.output
    assert "after 6 iterations" in result.output
    assert [int(r["iteration"]) for r in _rows(out / "seed_0" / "am_l1.csv")] == [5, 6]
    assert (out / "seed_0" / "am_grids.txt").exists()


def test_eval_command_reports_every_run(tmp_path, config_file):
    runner = CliRunner()
    train_out = tmp_path / "train"
    assert runner.invoke(cli, ["run", str(config_file), "--out", str(train_out), "--repeats", "2"]).exit_code == 0

    out = tmp_path / "eval"
    result = runner.invoke(cli, ["eval", str(train_out), str(config_file), "--out", str(out)])
    assert result.exit_code == 0, result.output

    report = _rows(out / "eval_report.csv")
    assert len(report) == 2
    assert all(r["checkpoint"].endswith("checkpoint_000004.pt") for r in report)
    assert set(report[0]) == {"checkpoint", "l1_error", "minus_two", "two", "twenty"}
    coverage = _rows(out / "mode_coverage.csv")
    assert [r["mode"] for r in coverage] == ["minus_two", "two", "twenty"]
    assert all(r["runs"] == "2" for r in coverage)
    assert (out / "policy_hist_1.txt").exists()


def test_eval_rejects_other_environment(tmp_path, config_file):
    runner = CliRunner()
    train_out = tmp_path / "train"
    assert runner.invoke(cli, ["run", str(config_file), "--out", str(train_out), "--batches", "0"]).exit_code == 0
    grid = tmp_path / "grid.ini"
    grid.write_text("[run]\nenv = grid\n\n[evaluation]\nsamples = 10\n")
    result = runner.invoke(cli, ["eval", str(train_out / "seed_0" / "checkpoint_000000.pt"), str(grid), "--out", str(tmp_path / "e")])
    assert result.exit_code == 2


def test_malformed_torus_potential_exits_with_two(tmp_path):
    fes = tmp_path / "fes.txt"
    fes.write_text("# metagfn-grid 1\nkind torus\ndims 2\n[V]\n1.0\n")
    path = tmp_path / "torus.ini"
    path.write_text(f"[run]\nenv = torus\ntorus_potential = {fes}\n")
    result = CliRunner().invoke(cli, ["sample-am", str(path), "--out", str(tmp_path / "out")])
    assert result.exit_code == 2
    assert "shape" in result.output

import csv
import json

import pytest

from slevel import cli

TOY = """[problem]
name = toy1d

[solver]
name = sfls
theta = 1.25
iterations = 500
batch_size = 1
outer_limit = 6
reference_f_star = 1.0
"""


@pytest.fixture()
def toy_config(tmp_path):
    p = tmp_path / "toy.ini"
    p.write_text(TOY)
    return p


def test_run_single_seed(tmp_path, toy_config):
    out = tmp_path / "out"
    assert cli.main(["run", "--config", str(toy_config), "--seed", "3", "--out", str(out)]) == 0
    assert sorted(p.name for p in out.iterdir()) == ["summary.json", "trace_seed3.csv"]
    summary = json.loads((out / "summary.json").read_text())
    assert summary["feasible_path_frequency"] == 1.0
    assert summary["per_seed"][0]["outer_iterations"] == 6
    rows = list(csv.DictReader(open(out / "trace_seed3.csv")))
    assert len(rows) == 6


def test_unknown_solver_writes_nothing(tmp_path, toy_config):
    out = tmp_path / "out"
    code = cli.main(["run", "--config", str(toy_config), "--out", str(out), "--set", "solver.name=bogus"])
    assert code == 2
    assert not out.exists()


def test_bad_override_is_config_error(tmp_path, toy_config):
    assert cli.main(["run", "--config", str(toy_config), "--set", "solver.theta"]) == 2
    assert cli.main(["run", "--config", str(tmp_path / "missing.ini")]) == 2


def test_byte_identical_csv(tmp_path, toy_config):
    for name in ("a", "b"):
        assert cli.main(["run", "--config", str(toy_config), "--seed", "1", "--out", str(tmp_path / name),
                         "--no-wall-time", "--set", "problem.noise=0.3", "--set", "solver.batch_size=4"]) == 0
    assert (tmp_path / "a" / "trace_seed1.csv").read_bytes() == (tmp_path / "b" / "trace_seed1.csv").read_bytes()


def test_parallel_sweep(tmp_path, toy_config, monkeypatch):
    monkeypatch.setenv("SLEVEL_THREADS", "2")
    assert cli.effective_jobs(8) == 2
    out = tmp_path / "sweep"
    code = cli.main(["run", "--config", str(toy_config), "--out", str(out), "--jobs", "4",
                     "--set", "run.seeds=0-3", "--set", "problem.noise=0.2", "--set", "solver.batch_size=4"])
    assert code == 0
    summary = json.loads((out / "summary.json").read_text())
    assert [r["seed"] for r in summary["per_seed"]] == [0, 1, 2, 3]
    assert len(list(out.glob("trace_seed*.csv"))) == 4


@pytest.mark.parametrize("solver", ["dfls", "ovsmd-only"])
def test_other_solvers(tmp_path, toy_config, solver):
    out = tmp_path / solver
    assert cli.main(["run", "--config", str(toy_config), "--out", str(out), "--set", f"solver.name={solver}"]) == 0
    summary = json.loads((out / "summary.json").read_text())
    want = 1 if solver == "ovsmd-only" else 6
    assert summary["per_seed"][0]["outer_iterations"] == want


def test_problem_builders():
    from slevel.io import ProblemSettings
    for name in ("toy2d", "np", "fairness", "alp"):
        prob = cli.build_problem(ProblemSettings(name=name, num_points=90, feature_dim=2, num_samples=5))
        assert prob.num_constraints >= 1


def test_verify_quick_passes(capsys, tmp_path):
    report = tmp_path / "r.json"
    assert cli.main(["verify", "--level", "quick", "--report", str(report)]) == 0
    data = json.loads(report.read_text())
    assert data["passed"] and data["failed"] == []


def test_verify_detects_zero_entropy_floor(capsys):
    assert cli.main(["verify", "--level", "quick", "--entropy-floor", "0"]) == 1
    err = capsys.readouterr().err
    assert "failed criteria: 2" in err

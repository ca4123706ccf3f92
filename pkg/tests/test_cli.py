import csv
import json
import math
import subprocess
import sys

import pytest

from symnode import config
from symnode.cli import CONVERGENCE_COLUMNS, main


def write_cfg(path, **kw):
    path.write_text(config.dumps(config.resolve(kw)))
    return str(path)


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


@pytest.fixture
def simulated(tmp_path):
    assert main(["simulate", "--out", str(tmp_path)]) == 0
    return tmp_path


def test_simulate_defaults(simulated):
    doc = json.loads((simulated / "dataset.json").read_text())
    assert len(doc["experiments"]) == 50
    assert (simulated / "simulate_meta.json").exists()
    assert "started" not in (simulated / "dataset.json").read_text()


def test_simulate_is_reproducible(simulated, tmp_path_factory):
    other = tmp_path_factory.mktemp("again")
    assert main(["simulate", "--out", str(other)]) == 0
    assert (other / "dataset.json").read_bytes() == (simulated / "dataset.json").read_bytes()


def test_seed_flag_changes_dataset(simulated, tmp_path_factory):
    other = tmp_path_factory.mktemp("seeded")
    assert main(["simulate", "--out", str(other), "--seed", "9"]) == 0
    assert (other / "dataset.json").read_bytes() != (simulated / "dataset.json").read_bytes()
    assert "data.seed = 9" in (other / "simulate_config.toml").read_text()


def test_negative_sigma_exit_3(tmp_path, capsys):
    path = tmp_path / "c.toml"
    path.write_text("data.noise_sigma = -0.5\n")
    assert main(["simulate", "--config", str(path), "--out", str(tmp_path)]) == 3
    assert "noise_sigma" in capsys.readouterr().err


def test_unknown_key_exit_3(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text("train.learning_rate = 0.1\n")
    assert main(["train", "--config", str(path), "--out", str(tmp_path)]) == 3


def test_train_missing_dataset_exit_3(tmp_path, capsys):
    assert main(["train", "--out", str(tmp_path)]) == 3
    assert "not found" in capsys.readouterr().err


def test_train_schema_violation_exit_3(simulated, capsys):
    doc = json.loads((simulated / "dataset.json").read_text())
    doc["experiments"][4]["observations"][0]["t"] = "late"
    (simulated / "dataset.json").write_text(json.dumps(doc))
    assert main(["train", "--out", str(simulated)]) == 3
    assert "experiments/4/observations/0/t" in capsys.readouterr().err


def test_train_zero_weights_report(simulated):
    cfg = write_cfg(simulated / "c.toml", **{"loss.a1": 0.0, "loss.a2": 0.0, "loss.a3": 0.0, "loss.a4": 0.0, "train.max_iters": 20})
    code = main(["train", "--config", cfg, "--out", str(simulated)])
    assert code == 2  # 20 iterations are not enough to converge
    rows = read_csv(simulated / "convergence.csv")
    assert list(rows[0]) == CONVERGENCE_COLUMNS
    assert len(rows) == 21
    report = json.loads((simulated / "train_report.json").read_text())
    assert report["converged"] is False
    for key in ("reg_f", "reg_g", "reg_h", "reg_i"):
        assert report["final_loss"][key] == 0.0
        assert all(float(r[key]) == 0.0 for r in rows)
    assert rows[1]["adjoint_fd_gap"] == "nan"
    assert report["theta_path"][1]["adjoint_fd_gap"] is None


def test_train_defaults_recover_parameters(simulated):
    assert main(["train", "--out", str(simulated)]) == 0
    report = json.loads((simulated / "train_report.json").read_text())
    assert report["converged"]
    assert report["param_error_inf"] <= 1e-3
    assert report["config"]["loss.a1"] == 0.01


def test_report_config_reproduces_run(simulated, tmp_path_factory):
    cfg = write_cfg(simulated / "c.toml", **{"train.max_iters": 8})
    assert main(["train", "--config", cfg, "--out", str(simulated)]) == 2
    other = tmp_path_factory.mktemp("replay")
    (other / "dataset.json").write_bytes((simulated / "dataset.json").read_bytes())
    assert main(["train", "--config", str(simulated / "train_report.json"), "--out", str(other)]) == 2
    for name in ("convergence.csv", "train_report.json"):
        assert (other / name).read_bytes() == (simulated / name).read_bytes()


def test_audit_symmetry_defaults(tmp_path, capsys):
    assert main(["audit-symmetry", "--out", str(tmp_path)]) == 0
    fwd = read_csv(tmp_path / "audit_forward.csv")
    assert len(fwd) == 2 * 3 * 5 * 27
    assert max(abs(float(r["residual"])) for r in fwd) <= 1e-10
    bwd = read_csv(tmp_path / "audit_backward.csv")
    k4 = [r for r in bwd if r["group"] == "k4"]
    assert all(abs(float(r["r4"]) - float(r["r4_closed_form"])) <= 1e-9 for r in k4)
    assert any(abs(float(r["r4"])) > 0.1 for r in k4)
    exact = [r for r in bwd if r["group"] == "exact"]
    assert max(abs(float(r[k])) for r in exact for k in ("r1", "r2", "r3", "r4")) <= 1e-10
    report = json.loads((tmp_path / "audit_report.json").read_text())
    assert all(report["checks"].values())
    assert 1.9 <= report["scaling_slopes"]["F"] <= 2.1
    assert "FAIL" not in capsys.readouterr().out


def test_grad_check_defaults(simulated):
    assert main(["grad-check", "--out", str(simulated)]) == 0
    rows = read_csv(simulated / "gradcheck.csv")
    assert len(rows) == 22
    assert all(r["pass"] == "1" for r in rows)
    (opt,) = [r for r in rows if r["kind"] == "optimum"]
    assert max(abs(float(opt[k])) for k in ("adj_g1", "adj_g2", "fd_g1", "fd_g2")) <= 1e-8
    (lin,) = [r for r in rows if r["kind"] == "linear"]
    assert float(lin["theta1"]) == 0.0


def test_compare_small(simulated):
    cfg = write_cfg(simulated / "c.toml", **{"compare.seeds": [0, 1], "train.max_iters": 5})
    assert main(["compare", "--config", cfg, "--out", str(simulated)]) == 0
    rows = read_csv(simulated / "compare.csv")
    assert [(r["seed"], r["arm"]) for r in rows] == [
        ("0", "plain"), ("0", "regularized"), ("1", "plain"), ("1", "regularized"),
    ]
    report = json.loads((simulated / "compare_report.json").read_text())
    assert math.isfinite(report["mean_param_error_plain"])
    assert math.isfinite(report["mean_param_error_regularized"])
    assert all(run["plain"]["theta_path"] is None for run in report["runs"])


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "symnode", "simulate", "--out", str(tmp_path)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "dataset.json").exists()

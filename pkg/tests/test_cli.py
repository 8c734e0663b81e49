import json

import numpy as np
import pytest

from ratreg.cli import main


@pytest.fixture
def bundle(tmp_path):
    out = tmp_path / "prob"
    assert main(["gen", "--type", "diagonal", "--m", "200", "--s", "1", "--mu", "0.5",
                 "--delta", "1e-3", "--seed", "7", "--out", str(out)]) == 0
    return out


def test_gen_noise_norm(bundle):
    y = np.loadtxt(bundle / "y_noisy.csv")
    y0 = np.loadtxt(bundle / "y_exact.csv")
    assert np.linalg.norm(y - y0) == pytest.approx(1e-3, rel=1e-12)


def test_gen_gravity(tmp_path):
    assert main(["gen", "--type", "gravity", "--m", "64", "--delta", "1e-3",
                 "--out", str(tmp_path / "g")]) == 0
    assert json.loads((tmp_path / "g" / "problem.json").read_text())["operator"]["type"] == "dense"


def test_gen_missing_delta(tmp_path, capsys):
    assert main(["gen", "--type", "diagonal", "--out", str(tmp_path / "x")]) == 2


def test_solve_and_ordering(bundle, tmp_path, capsys):
    n = {}
    for m in ("agg", "cgne"):
        out = tmp_path / m
        assert main(["solve", "--method", m, "--schedule", "geometric:8,0.5,1", "--tau", "1.5",
                     str(bundle), "--out", str(out)]) == 0
        res = json.loads((out / "result.json").read_text())
        n[m] = res["n_star"]
        assert (out / "solution.csv").exists() and (out / "trace.csv").exists()
    assert n["agg"] <= n["cgne"]


def test_solve_compare_path(bundle, tmp_path, capsys):
    out = tmp_path / "cmp"
    assert main(["solve", str(bundle), "--path", "nested", "--compare-path", "factorized",
                 "--out", str(out)]) == 0
    res = json.loads((out / "result.json").read_text())
    assert res["path_agreement"]["relative_residual_gap"] <= 1e-8
    assert "residual agreement" in capsys.readouterr().out


def test_solve_exit_codes(bundle, tmp_path):
    assert main(["solve", str(bundle), "--max-n", "1", "--out", str(tmp_path / "a")]) == 3
    assert main(["solve", str(bundle), "--delta", "1", "--out", str(tmp_path / "b")]) == 4
    assert main(["solve", str(tmp_path / "missing"), "--out", str(tmp_path / "c")]) == 2


def test_config_file_and_override(bundle, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"method": "ratcg", "tau": 2.0, "schedule": "constant:1"}))
    out = tmp_path / "o"
    assert main(["solve", str(bundle), "--config", str(cfg), "--tau", "1.5",
                 "--out", str(out)]) == 0
    res = json.loads((out / "result.json").read_text())
    assert res["method"] == "ratcg" and res["tau"] == 1.5


def test_diagnose(bundle, tmp_path, capsys):
    assert main(["diagnose", "--n-max", "8", str(bundle), "--out", str(tmp_path / "d")]) == 0
    rep = json.loads((tmp_path / "d" / "diagnostics.json").read_text())
    assert rep["passed"] and rep["counts"]["fail"] == 0 and rep["counts"]["pass"] > 0


def test_diagnose_rank_one(tmp_path, capsys):
    from ratreg.linop import DiagonalOperator
    from ratreg.problems import InverseProblem, save_problem
    op = DiagonalOperator([1.0, 0.5, 0.25])
    y = np.array([1.0, 0.0, 0.0])
    save_problem(InverseProblem(op, y, y, y, 0.0), tmp_path / "r1")
    assert main(["diagnose", str(tmp_path / "r1"), "--out", str(tmp_path / "d")]) == 0
    rep = json.loads((tmp_path / "d" / "diagnostics.json").read_text())
    assert rep["counts"]["skipped"] > 0


def test_rates_small(tmp_path, capsys):
    args = ["rates", "--mu", "0.5", "--method", "agg", "--deltas", "1e-2", "1e-3", "1e-4",
            "--seeds", "2", "--m", "100", "--out", str(tmp_path / "r")]
    assert main(args) == 0
    summary = json.loads((tmp_path / "r" / "summary.json").read_text())
    assert "0.5" in summary["slopes"]
    assert "slope=" in capsys.readouterr().out

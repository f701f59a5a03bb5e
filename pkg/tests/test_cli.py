import csv

import numpy as np
import pytest

from src.cli import (
    EXIT_ADMISSIBILITY,
    EXIT_IO,
    EXIT_OK,
    EXIT_VALIDATION,
    main,
    run_classify,
    run_exp1,
    run_exp2,
    run_flow,
    run_seqdiag,
    run_spray,
)
from src.loopspace import LoopCurve, experiment_target_curve


def read_rows(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def test_exp1_single_step(tmp_path):
    code = main(["exp1", "--steps", "1", "--output-dir", str(tmp_path), "--format", "csv", "json"])
    assert code == EXIT_OK
    rows = read_rows(tmp_path / "trace.csv")
    assert len(rows) == 2
    first = rows[0]
    assert float(first["decrease"]) == pytest.approx(0.09 * float(first["grad_norm"]) ** 2, rel=1e-9)
    assert not (tmp_path / "figure.svg").exists()


@pytest.mark.parametrize(
    "argv",
    [
        ["exp1", "--alpha", "0"],
        ["exp1", "--n-samples", "7"],
        ["exp2", "--lambda", "-1"],
    ],
)
def test_validation_errors_exit_2(argv, tmp_path, capsys):
    assert main(argv + ["--output-dir", str(tmp_path)]) == EXIT_VALIDATION
    assert "invalid input" in capsys.readouterr().err


def test_alpha_zero_message(tmp_path, capsys):
    main(["exp1", "--alpha", "0", "--output-dir", str(tmp_path)])
    assert "step size must be positive" in capsys.readouterr().err


def test_target_on_wrong_grid_exits_2(tmp_path):
    target = tmp_path / "g.json"
    target.write_text(experiment_target_curve(32).to_json())
    assert main(["exp2", "--target-file", str(target), "--output-dir", str(tmp_path / "out")]) == EXIT_VALIDATION


def test_non_immersed_start_exits_3(tmp_path):
    start = tmp_path / "dot.json"
    start.write_text(LoopCurve(np.zeros((16, 2))).to_json())
    code = main(["flow", "--curve-file", str(start), "--output-dir", str(tmp_path / "out")])
    assert code == EXIT_ADMISSIBILITY


def test_unwritable_output_exits_4(tmp_path):
    blocker = tmp_path / "blocker"
    blocker.write_text("")
    assert main(["spray", "--dims", "4,8", "--output-dir", str(blocker / "out")]) == EXIT_IO


def test_runs_are_byte_identical(tmp_path):
    for name in ("a", "b"):
        assert main(["exp2", "--steps", "5", "--seed", "3", "--output-dir", str(tmp_path / name)]) == EXIT_OK
    for name in ("trace.csv", "iterates.json", "snapshots.csv", "decay.csv", "report.json", "minimizer.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_seqdiag_gap_column_is_constant(tmp_path):
    assert main(["seqdiag", "--kmax", "50", "--output-dir", str(tmp_path), "--format", "csv"]) == EXIT_OK
    gaps = [float(r["grad_gap"]) for r in read_rows(tmp_path / "sequence.csv")[1:]]
    assert len(gaps) == 49
    np.testing.assert_allclose(gaps, 2 * np.sqrt(2 * np.pi), atol=1e-6)


def test_classify_given_point(tmp_path):
    point = tmp_path / "cstar.json"
    point.write_text(LoopCurve(experiment_target_curve(64).points / 1.7).to_json())
    argv = ["classify", "--objective", "track-reg", "--lambda", "0.7", "--curve-file", str(point)]
    assert main(argv + ["--n-samples", "64", "--output-dir", str(tmp_path / "out")]) == EXIT_OK
    assert '"class": "CoerciveMinimizerCandidate"' in (tmp_path / "out" / "classification.json").read_text()


def test_output_dir_falls_back_to_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("LOOPOPT_OUTPUT_DIR", str(tmp_path / "env"))
    assert main(["spray", "--dims", "4,8,16,32", "--format", "csv"]) == EXIT_OK
    rows = read_rows(tmp_path / "env" / "growth.csv")
    gammas = [float(r["max_gamma"]) for r in rows]
    assert gammas == sorted(gammas) and len(set(gammas)) == 4


def test_python_entry_points(tmp_path):
    result = run_spray(dims=[4, 8], output_dir=str(tmp_path), formats=["json"])
    assert result["artifacts"] == ["growth.json"]


@pytest.mark.parametrize(
    "runner,overrides,expected",
    [
        (run_exp1, {"steps": 2, "n_samples": 64}, "report.json"),
        (run_exp2, {"steps": 2, "n_samples": 64}, "minimizer.json"),
        (run_flow, {"steps": 5}, "report.json"),
        (run_seqdiag, {"kmax": 5, "n_samples": 64}, "report.json"),
        (run_classify, {"n_samples": 64}, "classification.json"),
    ],
)
def test_run_functions_write_json(runner, overrides, expected, tmp_path):
    result = runner(output_dir=str(tmp_path), formats=["json"], **overrides)
    assert expected in result["artifacts"]
    assert all(name.endswith(".json") for name in result["artifacts"])

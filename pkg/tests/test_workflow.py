import json

import numpy as np
import pytest
from pydantic import ValidationError

from src.metrics import MetricKind
from src.objectives import ObjectiveKind
from src.workflow_graph import Command, ExperimentState, RunConfig, run_experiment


def test_command_defaults():
    exp1 = RunConfig(command="exp1")
    assert (exp1.alpha, exp1.steps, exp1.n_samples, exp1.lam) == (0.1, 20, 256, 0.0)
    assert exp1.objective is ObjectiveKind.TRACK_IDENTITY and exp1.metric is MetricKind.FLAT_L2

    exp2 = RunConfig(command="exp2")
    assert (exp2.alpha, exp2.lam) == (0.04, 0.7)

    flow = RunConfig(command="flow")
    assert (flow.alpha, flow.steps, flow.n_samples) == (1e-3, 2000, 16)
    assert flow.objective is ObjectiveKind.LENGTH and flow.metric is MetricKind.INVARIANT_L2

    assert RunConfig(command="classify").lam == 0.7
    assert RunConfig(command="exp2", lam=0.0, alpha=0.2).alpha == 0.2


@pytest.mark.parametrize(
    "overrides,message",
    [
        ({"alpha": 0.0}, "step size must be positive"),
        ({"n_samples": 255}, "grid size"),
        ({"lam": -0.1}, "lambda must be nonnegative"),
        ({"formats": ["png"]}, "unknown formats"),
    ],
)
def test_invalid_configs(overrides, message):
    with pytest.raises(ValidationError, match=message):
        RunConfig(command=Command.EXP1, **overrides)


def test_state_rejects_foreign_setup_and_trace():
    cfg = RunConfig(command="exp1")
    assert ExperimentState(config=cfg).setup is None
    with pytest.raises(ValidationError, match="setup"):
        ExperimentState(config=cfg, setup={"curve": None})
    with pytest.raises(ValidationError, match="trace"):
        ExperimentState(config=cfg, trace=[1, 2, 3])


def test_exp1_pipeline(tmp_path):
    result = run_experiment(RunConfig(command="exp1", output_dir=str(tmp_path)))
    np.testing.assert_allclose(result["f_gap_ratios"], 0.64, rtol=1e-9)
    assert result["sufficient_decrease"]["holds"]
    assert result["sufficient_decrease"]["c"] == pytest.approx(0.09)
    assert all(row["holds"] for row in result["convergence_bound"])
    assert result["f_final"] == pytest.approx(0.64**20 * result["f0"], rel=1e-8)
    assert result["minimizer_class"]["point_class"] == "CoerciveMinimizerCandidate"
    names = ("trace.csv", "iterates.json", "snapshots.csv", "decay.csv", "figure.svg", "report.json", "minimizer.csv")
    for name in names:
        assert (tmp_path / name).exists()
    snapshot_iters = {line.split(",")[0] for line in (tmp_path / "snapshots.csv").read_text().splitlines()[1:]}
    assert snapshot_iters == {"0", "5", "10", "20"}


def test_exp2_pipeline(tmp_path):
    result = run_experiment(RunConfig(command="exp2", output_dir=str(tmp_path), formats=["csv", "json"]))
    np.testing.assert_allclose(result["distance_ratios"], 0.864, rtol=1e-8)
    np.testing.assert_allclose(result["f_gap_ratios"], 0.864**2, rtol=1e-8)
    assert result["contraction_expected"] == pytest.approx(0.864**2)
    assert result["minimizer_class"]["mu_hat"] == pytest.approx(3.4, abs=1e-8)
    minimizer = json.loads((tmp_path / "minimizer.json").read_text())
    assert minimizer["n"] == 256
    assert (tmp_path / "minimizer.csv").read_text().splitlines()[0] == "theta,x,y"
    assert not (tmp_path / "figure.svg").exists()


def test_flow_pipeline(tmp_path):
    result = run_experiment(RunConfig(command="flow", steps=100, output_dir=str(tmp_path), formats=["csv"]))
    assert result["status"] == "max_iter"
    assert not result["collapsed"]
    assert result["length_final"] < result["length_initial"]
    lines = (tmp_path / "flow.csv").read_text().splitlines()
    assert lines[0] == "iter,length,area,iso_ratio"
    assert len(lines) == 102


def test_ellipse_flow_pipeline(tmp_path):
    result = run_experiment(
        RunConfig(command="flow", initial="ellipse", steps=200, output_dir=str(tmp_path), formats=["json"])
    )
    assert result["status"] == "max_iter"
    assert not result["collapsed"]
    assert result["length_final"] < result["length_initial"]


def test_analysis_pipelines(tmp_path):
    seq = run_experiment(RunConfig(command="seqdiag", kmax=10, output_dir=str(tmp_path / "seq")))
    assert seq["grad_gap_min"] == pytest.approx(2 * np.sqrt(2 * np.pi), abs=1e-6)
    assert (tmp_path / "seq" / "regularity.svg").exists()
    spectrum = (tmp_path / "seq" / "regularity_spectrum.csv").read_text().splitlines()
    assert spectrum[0] == "mode,curve_mag,source_mag,grad_mag"

    spray = run_experiment(RunConfig(command="spray", dims=[4, 8, 16], output_dir=str(tmp_path / "spray")))
    assert spray["strictly_increasing"]
    assert spray["artifacts"] == ["growth.csv", "growth.json", "figure.svg"]

    cls = run_experiment(RunConfig(command="classify", output_dir=str(tmp_path / "cls")))
    assert cls["point_class"] == "CoerciveMinimizerCandidate"
    assert json.loads((tmp_path / "cls" / "classification.json").read_text())["class"] == cls["point_class"]

import json

import pytest

from src.exceptions import ArtifactError, ValidationFailure
from src.loopspace import experiment_start_curve
from src.nodes import figures
from src.nodes.artifacts import ArtifactStore, format_cell, load_curve


def test_format_cell():
    assert format_cell(None) == ""
    assert format_cell(0.1) == "0.10000000000000001"
    assert format_cell(3) == "3"


def test_csv_and_json_writes(tmp_path):
    store = ArtifactStore(str(tmp_path / "out"))
    store.save_csv("table.csv", ["a", "b"], [(1, 0.5), (2, None)])
    store.save_json("report.json", {"b": 1, "a": [1.5]})
    assert (tmp_path / "out" / "table.csv").read_text() == "a,b\n1,0.5\n2,\n"
    assert json.loads((tmp_path / "out" / "report.json").read_text()) == {"a": [1.5], "b": 1}
    assert store.written == ["table.csv", "report.json"]
    assert not [p for p in (tmp_path / "out").iterdir() if p.name.endswith(".tmp")]


def test_format_filter_skips_disabled_extensions(tmp_path):
    store = ArtifactStore(str(tmp_path), formats=["csv"])
    assert store.save_json("report.json", {}) is None
    assert store.save_csv("t.csv", ["x"], [(1,)]) is not None
    assert not (tmp_path / "report.json").exists()


def test_figures_are_deterministic_svg(tmp_path):
    c = experiment_start_curve(32)
    outputs = []
    for name in ("a", "b"):
        store = ArtifactStore(str(tmp_path / name))
        fig = figures.descent_figure({0: c}, [0, 1], [1.0, 0.5], [2.0, 1.0], title="exp1")
        store.save_figure("figure.svg", fig)
        outputs.append((tmp_path / name / "figure.svg").read_bytes())
    assert outputs[0].startswith(b"<?xml")
    assert outputs[0] == outputs[1]


def test_unwritable_output_dir(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(ArtifactError):
        ArtifactStore(str(blocker / "sub"))


def test_load_curve_formats(tmp_path):
    c = experiment_start_curve(16)
    (tmp_path / "c.json").write_text(c.to_json())
    (tmp_path / "c.csv").write_text(c.to_csv())
    assert (load_curve(str(tmp_path / "c.json")).points == c.points).all()
    assert (load_curve(str(tmp_path / "c.csv")).points == c.points).all()
    with pytest.raises(ArtifactError):
        load_curve(str(tmp_path / "missing.json"))
    (tmp_path / "bad.csv").write_text("x,y\n1,2\n")
    with pytest.raises(ValidationFailure):
        load_curve(str(tmp_path / "bad.csv"))

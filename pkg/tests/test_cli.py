import csv
import json

import pytest

from qdaa.bundled import get_model
from qdaa.cli import main
from qdaa.model import serialize_model


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_reach_fig2(tmp_path, capsys):
    code, out, _ = run(capsys, "reach", "--model", "fig2", "--kappa", "8", "--samples", "200", "--seed", "7",
                       "--out", str(tmp_path), "--threads", "1")
    assert code == 0
    assert "reachable rectangles: 2" in out and "rho: 2" in out
    assert "A: [0, 5]" in out and "B: [0, 2.5]" in out
    for name in ("report.json", "automaton.json", "automaton.dot", "bounds.csv", "heatmap.svg"):
        assert (tmp_path / name).exists()
    rows = list(csv.reader(open(tmp_path / "bounds.csv")))
    assert rows == [["species", "lower", "upper"], ["A", "0.0", "5.0"], ["B", "0.0", "2.5"]]
    assert (tmp_path / "heatmap.svg").read_text().startswith("<svg")


def test_reach_format_filter_and_trajectories(tmp_path, capsys):
    code, _, _ = run(capsys, "reach", "--model", "fig2", "--kappa", "4", "--samples", "50", "--out", str(tmp_path),
                     "--format", "csv", "--trajectories", "3")
    assert code == 0
    assert sorted(p.name for p in tmp_path.iterdir()) == ["bounds.csv", "trajectories.csv"]


def test_seed_from_environment(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("QDAA_SEED", "11")
    code, out, _ = run(capsys, "reach", "--model", "fig2", "--kappa", "4", "--samples", "50",
                       "--out", str(tmp_path), "--format", "json")
    assert code == 0 and "seed=11" in out
    monkeypatch.setenv("QDAA_SEED", "abc")
    code, _, err = run(capsys, "reach", "--model", "fig2", "--out", str(tmp_path))
    assert code == 1 and "QDAA_SEED" in err


def test_rats_fig2(tmp_path, capsys):
    code, out, _ = run(capsys, "rats", "--model", "fig2", "--out", str(tmp_path))
    assert code == 0 and "reachable rectangles: 3" in out
    doc = json.loads((tmp_path / "report.json").read_text())
    assert sorted(map(tuple, (r["index"] for r in doc["rectangles"]))) == [(0, 0), (1, 0), (1, 1)]
    assert (tmp_path / "automaton.dot").exists() and (tmp_path / "bounds.csv").exists()


def test_sweep_fig2(tmp_path, capsys):
    code, _, _ = run(capsys, "sweep", "--model", "fig2", "--kappas", "4,8", "--samples", "100",
                     "--out", str(tmp_path))
    assert code == 0
    rows = list(csv.DictReader(open(tmp_path / "sweep.csv")))
    assert [r["kappa"] for r in rows] == ["4", "8"]
    assert all(r["rectangles"] == "2" and float(r["rho"]) >= 1 for r in rows)


def test_export_round_trips(tmp_path, capsys):
    code, _, _ = run(capsys, "export", "--model", "fig2", "--kappa", "4", "--samples", "50", "--out", str(tmp_path))
    assert code == 0
    again = tmp_path / "again"
    code, _, _ = run(capsys, "export", "--model", str(tmp_path / "model.json"), "--kappa", "4", "--samples", "50",
                     "--out", str(again))
    assert code == 0
    assert (tmp_path / "automaton.json").read_text() == (again / "automaton.json").read_text()


def test_validate(tmp_path, capsys):
    code, out, _ = run(capsys, "validate", "--model", "ammonium")
    assert code == 0 and "7 species" in out
    path = tmp_path / "m.json"
    path.write_text(serialize_model(get_model("enzyme")))
    assert run(capsys, "validate", "--model", str(path))[0] == 0


@pytest.mark.parametrize("argv", [
    ["reach", "--model", "nope"],
    ["sweep", "--model", "fig2", "--kappas", ""],
    ["reach", "--model", "fig2", "--kappa", "0"],
    ["reach", "--model", "fig2", "--samples", "-3"],
    ["reach"],
    ["frobnicate"],
])
def test_usage_and_model_errors_exit_1(argv, tmp_path, capsys):
    code, _, err = run(capsys, *argv, "--out", str(tmp_path)) if argv[0] != "frobnicate" else run(capsys, *argv)
    assert code == 1 and err


def test_unknown_model_lists_registry(capsys):
    code, _, err = run(capsys, "validate", "--model", "nope")
    assert code == 1 and "fig2" in err and "ammonium" in err


def test_corrupt_model_file(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{"dimension": 2,\n "species": ["A", "B"],\n "thresholds": [[0, 1], [0, 2, 2]]')
    code, _, err = run(capsys, "reach", "--model", str(path), "--out", str(tmp_path))
    assert code == 1 and "line" in err


def test_integration_failure_exit_2(tmp_path, capsys):
    code, _, err = run(capsys, "reach", "--model", "fig2", "--dt", "1e300", "--tmax", "1e301", "--kappa", "2",
                       "--samples", "5", "--out", str(tmp_path))
    assert code == 2 and "non-finite" in err

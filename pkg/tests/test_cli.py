import json
import os

import pytest

from meanfieldpy.cli import EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, dispatch
from meanfieldpy.core.exporter import Exporter
from meanfieldpy.utils.helpers import OUTPUT_KEYS

CONFIGS = os.path.join(os.path.dirname(__file__), "..", "configs")


def small_config(**solver):
    block = {"grid": 32, "epsilon": 0.3}
    block.update(solver)
    return {
        "group": {"order": 2},
        "h": {"constant": 1.0},
        "solver": block,
        "schedule": {"eps": [0.4, 0.35, 0.3]},
        "bubble": {"grid": 32},
        "testfn": {"grid": 32},
    }


def error_report(stderr):
    lines = [line for line in stderr.splitlines() if line.startswith('{"error"')]
    assert lines, stderr
    report = json.loads(lines[-1])
    assert set(report) == set(OUTPUT_KEYS["error"])
    return report


def read_json(path):
    with open(path) as f:
        return json.load(f)


def test_unknown_command(capsys):
    assert dispatch(["frobnicate"]) == EXIT_USAGE
    assert error_report(capsys.readouterr().err)["exit_code"] == EXIT_USAGE
    assert dispatch([]) == EXIT_USAGE


def test_constants(capsys, tmp_path):
    assert dispatch(["constants"]) == EXIT_OK
    table = json.loads(capsys.readouterr().out)
    assert set(table) == set(OUTPUT_KEYS["constants"])
    assert table["A_P"] == pytest.approx(-5.2421318, abs=1e-6)

    out = tmp_path / "constants"
    assert dispatch(["constants", "--out", str(out)]) == EXIT_OK
    manifest = read_json(out / "manifest.json")
    assert set(manifest) == set(OUTPUT_KEYS["manifest"])
    assert [f["path"] for f in manifest["files"]] == ["constants.json"]


def test_config_is_required(capsys):
    assert dispatch(["solve"]) == EXIT_CONFIG
    assert error_report(capsys.readouterr().err)["error"] == "ConfigurationError"


def test_invalid_weight(capsys, tmp_path):
    code = dispatch(["certify", "--config", os.path.join(CONFIGS, "bad_negative_h.yaml"),
                     "--out", str(tmp_path)])
    assert code == EXIT_CONFIG
    report = error_report(capsys.readouterr().err)
    assert report["error"] == "ConfigurationError"
    assert "non-positive" in report["message"]


def test_certify(tmp_path, write_config):
    out = tmp_path / "certify"
    assert dispatch(["certify", "--config", write_config(small_config()), "--out", str(out)]) == EXIT_OK
    report = read_json(out / "certificate.json")
    assert set(report) == set(OUTPUT_KEYS["certificate"])
    assert report["cond_holds"] is True
    assert report["hy2_holds"] is True
    assert {f["path"] for f in read_json(out / "manifest.json")["files"]} == {"config.json", "certificate.json"}


def test_solve_is_deterministic(tmp_path, write_config):
    path = write_config(small_config(perturbation=0.5, seed=3))
    for name in ("a", "b"):
        assert dispatch(["solve", "--config", path, "--out", str(tmp_path / name)]) == EXIT_OK
    summary = read_json(tmp_path / "a" / "summary.json")
    assert set(summary) == set(OUTPUT_KEYS["solve"])
    assert summary["converged"] is True
    assert (tmp_path / "a" / "iterations.csv").read_bytes() == (tmp_path / "b" / "iterations.csv").read_bytes()
    assert Exporter.load_grid(str(tmp_path / "a" / "field.grid")).shape == (32, 32)


def test_solve_iteration_cap(capsys, tmp_path, write_config):
    path = write_config(small_config(perturbation=0.5, max_iter=0))
    assert dispatch(["solve", "--config", path, "--out", str(tmp_path)]) == EXIT_NUMERIC
    assert error_report(capsys.readouterr().err)["error"] == "ConvergenceError"
    assert read_json(tmp_path / "summary.json")["converged"] is False
    assert (tmp_path / "manifest.json").exists()


def test_continue(tmp_path, write_config):
    code = dispatch(["continue", "--config", write_config(small_config()), "--out", str(tmp_path),
                     "--format", "json"])
    assert code == EXIT_OK
    rows = read_json(tmp_path / "continuation.json")
    assert [row["eps"] for row in rows] == [0.4, 0.35, 0.3]
    assert {row["status"] for row in rows} == {"bounded"}
    assert sorted(p for p in os.listdir(tmp_path) if p.endswith(".grid")) == \
        ["stage_00.grid", "stage_01.grid", "stage_02.grid"]


def test_green(tmp_path, write_config):
    assert dispatch(["green", "--config", write_config(small_config()), "--out", str(tmp_path)]) == EXIT_OK
    data = read_json(tmp_path / "green.json")
    assert set(data) == set(OUTPUT_KEYS["green"])
    assert data["ell"] == 2
    assert data["A_tilde"] == pytest.approx(-5.935279, abs=1e-4)
    assert Exporter.load_grid(str(tmp_path / "green.grid")).shape == (32, 32)
    assert (tmp_path / "green.csv").exists()


def test_bubble_from_field(tmp_path, write_config, exact_bubble):
    field_path = Exporter.export_grid(str(tmp_path / "u.grid"), exact_bubble(256, 0.02))
    cfg = {"group": {"order": 1}, "h": {"constant": 1.0}, "solver": {"grid": 256},
           "bubble": {"eps": 0.001, "grid": 256}}
    out = tmp_path / "bubble"
    code = dispatch(["bubble", "--config", write_config(cfg), "--field", field_path, "--out", str(out),
                     "--format", "json"])
    assert code == EXIT_OK
    data = read_json(out / "bubble.json")
    assert set(data) == set(OUTPUT_KEYS["bubble"])
    assert data["profile_error"] < 0.05
    assert data["r_eps"] == pytest.approx(0.02, rel=0.02)
    assert len(read_json(out / "profile.json")) == 33


def test_bubble_missing_field(capsys, tmp_path, write_config):
    code = dispatch(["bubble", "--config", write_config(small_config()), "--field", str(tmp_path / "none.grid"),
                     "--out", str(tmp_path / "out")])
    assert code == EXIT_CONFIG
    assert "--field" in error_report(capsys.readouterr().err)["message"]

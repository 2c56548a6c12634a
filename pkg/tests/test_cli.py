import json

import numpy as np
import pytest

from roughflow.cli import EXIT_ABORT, EXIT_CONFIG, EXIT_OK, main


def _write(tmp_path, text, name="cfg.toml"):
    f = tmp_path / name
    f.write_text(text)
    return str(f)


def _manifest(out):
    return json.loads((out / "manifest.json").read_text())


def test_lift_scenario_writes_manifest_and_csv(tmp_path, capsys):
    cfg = _write(tmp_path, 'preset = "lift_parabola"\n')
    out = tmp_path / "lift"
    assert main(["lift", "--config", cfg, "--out", str(out)]) == EXIT_OK
    assert capsys.readouterr().out.strip().endswith("manifest.json")
    man = _manifest(out)
    assert man["status"] == "ok" and man["scenario"] == "lift"
    assert {f["path"] for f in man["files"]} == {"level1.csv", "level2.csv"}
    lvl2 = np.loadtxt(out / "level2.csv", delimiter=",", skiprows=1)
    np.testing.assert_allclose(lvl2[1:], [0.5, 2 / 3, 1 / 3, 0.5], atol=1e-12)


def test_rde_scenario_with_refinement_levels(tmp_path):
    cfg = _write(tmp_path, 'preset = "linear_scalar"\n[grid]\nsteps = 16\n')
    out = tmp_path / "rde"
    assert main(["rde", "--config", cfg, "--out", str(out), "--levels", "3"]) == EXIT_OK
    ref = _manifest(out)["residuals"]["refinement"]
    assert ref["steps"] == [16, 32, 64]
    assert ref["order"] >= 2


def test_rde_circle_gains_pi(tmp_path):
    cfg = _write(tmp_path, 'preset = "circle_area"\n')
    out = tmp_path / "circle"
    assert main(["rde", "--config", cfg, "--out", str(out)]) == EXIT_OK
    final = _manifest(out)["residuals"]["final_positions"][0]
    assert final[2] == pytest.approx(np.pi, abs=1e-10)


def test_config_error_exit_code(tmp_path, capsys):
    cfg = _write(tmp_path, "[grid]\nbogus = 1\n")
    assert main(["lift", "--config", cfg, "--out", str(tmp_path / "x")]) == EXIT_CONFIG
    assert "bogus" in capsys.readouterr().err


def test_abort_exit_code_writes_aborted_manifest(tmp_path, capsys):
    cfg = _write(
        tmp_path,
        'preset = "burgers_sine"\n[grid]\nsteps = 2\nT = 1.0\nn = 64\n[model]\ninitial = "5*sin(x)"\n',
    )
    out = tmp_path / "abort"
    assert main(["burgers", "--config", cfg, "--out", str(out)]) == EXIT_ABORT
    assert "suggested grid.steps" in capsys.readouterr().err
    assert _manifest(out)["status"] == "aborted"


def test_seed_override_changes_outputs_and_rerun_is_identical(tmp_path):
    cfg = _write(tmp_path, '[driver]\nkind = "fbm"\nH = 0.4\nK = 2\n[grid]\nsteps = 16\n')
    runs = {}
    for tag, seed in (("a", "3"), ("b", "3"), ("c", "4")):
        out = tmp_path / tag
        assert main(["lift", "--config", cfg, "--out", str(out), "--seed", seed]) == EXIT_OK
        runs[tag] = _manifest(out)["files"]
    assert runs["a"] == runs["b"]
    assert runs["a"] != runs["c"]


def test_output_directory_from_environment(tmp_path, monkeypatch):
    cfg = _write(tmp_path, 'preset = "lift_parabola"\n')
    monkeypatch.setenv("ROUGHFLOW_OUT", str(tmp_path / "env"))
    assert main(["lift", "--config", cfg]) == EXIT_OK
    assert (tmp_path / "env" / "manifest.json").exists()


def test_figures_flag(tmp_path):
    pytest.importorskip("matplotlib")
    cfg = _write(tmp_path, 'preset = "circle_area"\n[grid]\nsteps = 32\n')
    out = tmp_path / "fig"
    assert main(["rde", "--config", cfg, "--out", str(out), "--figures"]) == EXIT_OK
    names = {f["path"] for f in _manifest(out)["files"]}
    assert any(n.endswith(".png") for n in names)


def test_figures_are_off_by_default(tmp_path):
    cfg = _write(tmp_path, 'preset = "circle_area"\n[grid]\nsteps = 32\n')
    out = tmp_path / "nofig"
    assert main(["rde", "--config", cfg, "--out", str(out)]) == EXIT_OK
    assert not list(out.glob("*.png"))

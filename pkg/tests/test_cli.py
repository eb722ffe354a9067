import json
import shutil
import subprocess

import pytest

from dpinn.cli import main
from dpinn.oracle import load_grid

TINY = {"schema": 1, "hidden_layers": 2, "hidden_width": 8,
        "hmc": {"burn_in": 10, "n_samples": 20, "n_leapfrog": 5},
        "adam_steps": 200, "lbfgs_steps": 50, "oracle_nx": 101, "oracle_nt": 101}


def write(path, doc):
    path.write_text(json.dumps(doc))
    return path


def test_entry_point_help():
    exe = shutil.which("dpinn")
    if exe is None:
        pytest.skip("package not installed as a console script")
    out = subprocess.run([exe, "--help"], capture_output=True, text=True, check=True).stdout
    for cmd in ("run", "matrix", "oracle"):
        assert cmd in out


def test_oracle(tmp_path, capsys):
    assert main(["oracle", "--pde", "allen_cahn", "--out", str(tmp_path), "--nx", "41", "--nt", "21"]) == 0
    sol = load_grid(tmp_path / "reference_allen_cahn.csv")
    assert sol.values.shape == (21, 41)
    assert json.loads((tmp_path / "reference_allen_cahn.json").read_text())
    assert "wrote" in capsys.readouterr().out


def test_run_with_overrides(tmp_path, capsys):
    cfg = write(tmp_path / "c.json", {**TINY, "scenario": "BIC", "noise": 0.05})
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--seed", "3", "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["config"]["seed"] == 3
    assert (out / "snapshot_t0.5.csv").exists() and (out / "plot.gp").exists()
    printed = json.loads(capsys.readouterr().out.splitlines()[0])
    assert printed["rel_l2_error"] == summary["rel_l2_error"]


def test_run_default_output_dir(tmp_path):
    cfg = write(tmp_path / "exp.json", {**TINY, "n_subdomains": 1})
    assert main(["run", "--config", str(cfg)]) == 0
    assert (tmp_path / "exp_out" / "summary.json").exists()


def test_run_rejects_empty_cell(tmp_path, capsys):
    cfg = write(tmp_path / "c.json", {**TINY, "noise": 0.07})
    assert main(["run", "--config", str(cfg)]) == 2
    assert "matrix cell" in capsys.readouterr().err


def test_missing_config(tmp_path):
    assert main(["run", "--config", str(tmp_path / "nope.json")]) == 2


def test_failed_stage_exit_code(tmp_path, capsys):
    cfg = write(tmp_path / "c.json", {**TINY, "scenario": "RD", "oracle_nx": 5, "oracle_nt": 3})
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
    assert "sampling" in capsys.readouterr().err


def test_matrix_empty(tmp_path, capsys):
    m = write(tmp_path / "m.json", {"schema": 1, "experiments": []})
    assert main(["matrix", "--file", str(m), "--out", str(tmp_path / "mo")]) == 0
    assert (tmp_path / "mo" / "summary.csv").exists()
    assert "0/0" in capsys.readouterr().out


def test_matrix_with_rejected_row(tmp_path):
    m = write(tmp_path / "m.json", {"schema": 1, "defaults": {k: v for k, v in TINY.items() if k != "schema"},
                                    "experiments": [{"name": "ok", "n_subdomains": 1}, {"name": "bad", "noise": 0.3}]})
    assert main(["matrix", "--file", str(m)]) == 1
    lines = (tmp_path / "m_out" / "summary.csv").read_text().splitlines()
    assert len(lines) == 3 and lines[1].startswith("ok,ok") and lines[2].startswith("bad,rejected")


def test_bad_arguments():
    with pytest.raises(SystemExit):
        main(["run"])
    with pytest.raises(SystemExit):
        main(["oracle", "--pde", "wave", "--out", "x"])
    with pytest.raises(SystemExit):
        main(["run", "--config", "c.json", "--preset", "huge"])

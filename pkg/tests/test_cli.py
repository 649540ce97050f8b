import csv
import json
import os
import subprocess
import sys

import pytest

from percolab import cli
from percolab import experiments as ex


def _run(tmp_path, *argv):
    return cli.run([*argv, "--out", str(tmp_path), "--threads", "1"])


def _rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_estimate_mu_on_full_lattice(tmp_path, capsys):
    assert _run(tmp_path, "estimate-mu", "--p", "1.0", "--n", "50", "--trials", "1") == 0
    rows = _rows(tmp_path / "estimate-mu.csv")
    assert len(rows) == 1 and float(rows[0]["ratio"]) == 1.0 and rows[0]["distance"] == "50"
    status = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert status["status"] == 0 and status["verdicts"]["n=50"]["mean_ratio"] == 1.0
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["outputs"] == ["estimate-mu.csv"]
    assert manifest["config_hash"] == ex.ExperimentConfig.from_dict(
        {k: v for k, v in manifest["config"].items()}).content_hash()
    assert not list(tmp_path.glob(".manifest.*"))


def test_subcritical_p0_is_a_config_error(tmp_path, capsys):
    assert _run(tmp_path, "estimate-mu", "--set", "p0=0.5") == 2
    assert "p0 > p_c" in capsys.readouterr().err
    assert not (tmp_path / "manifest.json").exists()


def test_unwritable_output_is_a_config_error(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert cli.run(["estimate-mu", "--p", "1.0", "--n", "5", "--trials", "1", "--out", str(blocker / "sub")]) == 2
    assert "error" in capsys.readouterr().err


def test_unknown_key_and_bad_override(tmp_path):
    assert _run(tmp_path, "estimate-mu", "--set", "nope=1") == 2
    assert _run(tmp_path, "estimate-mu", "--set", "noequals") == 2
    cfg_file = tmp_path / "c.json"
    cfg_file.write_text("[1, 2]")
    assert _run(tmp_path, "estimate-mu", "--config", str(cfg_file)) == 2


def test_dotted_overrides_reach_nested_tables(tmp_path):
    cfg_file = tmp_path / "c.json"
    cfg_file.write_text(json.dumps({"F": {"values": [1.0], "weights": [1.0]}}))
    argv = ["class-check", "--config", str(cfg_file), "--set", "F.finite_mass=0.9", "--set", "G.values=[0.0,1.0]",
            "--set", "G.weights=[0.9,0.1]", "--set", "G.finite_mass=1.0"]
    assert _run(tmp_path, *argv) == 0
    data = json.loads((tmp_path / "class-check.json").read_text())
    assert data["F"]["member"] is True
    assert data["G"]["member"] is False and data["G"]["clauses"]["G({0}) <= p1"] is False
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["config"]["F"]["finite_mass"] == 0.9


def test_fault_injection_exits_with_invariant_status(tmp_path, capsys):
    cfg_file = tmp_path / "c.json"
    cfg_file.write_text(json.dumps({
        "p": 0.9, "q": 0.95, "trials": 1,
        "planted": {"view_closures": [[[228, 87], 0]]},
        "inject": [{"scale": 1, "site": [75, 29], "verdict": "good"}],
    }))
    assert _run(tmp_path, "shell-verify", "--config", str(cfg_file)) == 4
    assert "not backed" in capsys.readouterr().err
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert "shell-verify.csv" in manifest["outputs"] and "invariant" in manifest["verdicts"]


def test_reruns_are_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    argv = ["estimate-mu", "--p", "0.8", "--n", "20", "--trials", "4", "--seed", "3"]
    assert cli.run([*argv, "--out", str(a), "--threads", "1"]) == 0
    assert cli.run([*argv, "--out", str(b), "--threads", "2"]) == 0
    assert (a / "estimate-mu.csv").read_bytes() == (b / "estimate-mu.csv").read_bytes()


def test_out_dir_from_environment(tmp_path):
    env = {**os.environ, "PERCOLAB_OUT": str(tmp_path / "envout")}
    proc = subprocess.run([sys.executable, "-m", "percolab.cli", "class-check"], env=env, capture_output=True,
                          text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "envout" / "class-check.json").exists()
    assert json.loads(proc.stdout.strip().splitlines()[-1])["status"] == 0


def test_emit_plot_data_estimate(tmp_path):
    rec = ex.estimate_mu(ex.ExperimentConfig(), 0.8, n=20, trials=5)
    path = tmp_path / "e.csv"
    cli.emit_plot_data(rec, path)
    rows = _rows(path)
    assert len(rows) == 5 and list(rows[0]) == ex.ESTIMATE_HEADER
    ratios = [float(r["ratio"]) for r in rows if r["ratio"]]
    assert sum(ratios) / len(ratios) == pytest.approx(rec.mean)
    with pytest.raises(ValueError):
        cli.emit_plot_data([], path)


def test_emit_plot_data_lipschitz(tmp_path):
    rep = ex.lipschitz_scan(ex.ExperimentConfig(), [0.9, 1.0], n=10, trials=2)
    path = tmp_path / "l.csv"
    cli.emit_plot_data(rep, path)
    rows = _rows(path)
    assert [r["row"] for r in rows] == ["point", "point", "summary"]
    assert float(rows[-1]["kappa_hat"]) == pytest.approx(rep.kappa)

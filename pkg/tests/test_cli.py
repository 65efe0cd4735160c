import json
import math

import numpy as np
import pytest

from spin1_nqs.cli import (PHASES, ConfigError, ExperimentConfig, IntegrityError, cmd_report,
                           main, resolve_parity, resolve_theta, verify_manifest)
from spin1_nqs.runio import read_csv, read_json


@pytest.fixture
def out(tmp_path, monkeypatch):
    monkeypatch.setenv("SPIN1_NQS_OUTPUT", str(tmp_path))
    return tmp_path


def _only_dir(root):
    dirs = [p for p in root.iterdir() if p.is_dir()]
    assert len(dirs) == 1
    return dirs[0]


def test_named_phases_exact():
    assert PHASES["afh"] == 0.0
    assert resolve_theta("aklt") == math.atan(1 / 3)
    assert resolve_theta("uls") == math.pi / 4
    assert resolve_theta("critical2") == math.atan(2)
    assert resolve_theta("0.25") == 0.25


def test_auto_parity_table():
    assert resolve_parity("afh", 8) == "even"
    assert resolve_parity("aklt", 10) == "even"
    assert resolve_parity("uls", 8) == "odd"
    assert resolve_parity("critical2", 10) == "odd"
    assert resolve_parity("uls", 12) == "even"
    assert resolve_parity("afh", 8, "odd") == "odd"
    assert resolve_parity(0.1, 4) == "even"


def test_config_validation():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"model": {"theta": "nope"}})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"bogus": 1})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"optimizer": {"kind": "ngd", "learning_rate": 5.0}})
    cfg = ExperimentConfig.from_dict({"model": {"theta": "uls"}})
    assert min(cfg.optimizer_config().epsilon_grid) == pytest.approx(1e-6)


def test_invalid_phase_exit_code(out, capsys):
    assert main(["ed", "--L", "4", "--phase", "ferro"]) == 2
    assert "unknown phase" in capsys.readouterr().err


def test_ed_aklt(out):
    assert main(["ed", "--L", "8", "--phase", "aklt", "--dump-hamiltonian"]) == 0
    run = _only_dir(out)
    _, rows = read_csv(run / "eigenvalues.csv")
    assert abs(float(rows[0][1]) + 14 / 3) <= 1e-9 and abs(float(rows[1][1]) + 14 / 3) <= 1e-9
    assert (run / "hamiltonian.coo").exists()
    text = cmd_report(run)
    assert "no training artifacts" in text


def test_ed_afh_unique_even(out):
    assert main(["ed", "--L", "8", "--phase", "afh"]) == 0
    manifest = read_json(_only_dir(out) / "manifest.json")
    assert manifest["degeneracy"] == 1 and manifest["target_parity"] == "even"


def test_train_report_and_tamper(out, capsys):
    cfg = {"model": {"L": 4, "theta": "afh"}, "ansatz": {"alpha": 1},
           "optimizer": {"kind": "ngd", "iterations": 60, "learning_rate": 0.1, "init_scale": 0.1},
           "diagnostics": {"hessian": True, "observables": True}}
    path = out / "cfg.json"
    path.write_text(json.dumps(cfg))
    assert main(["train", "--config", str(path), "--iterations", "80"]) == 0
    run = next(p for p in out.iterdir() if p.is_dir())
    for name in ("trace.csv", "report.json", "params.ckpt", "eigenvalues.csv", "hessian.csv",
                 "correlations.csv", "manifest.json"):
        assert (run / name).exists(), name
    manifest = verify_manifest(run)
    assert manifest["config"]["optimizer"]["iterations"] == 80
    assert manifest["artifacts"]["trace.csv"]["rows"] == 81
    capsys.readouterr()
    assert main(["report", str(run)]) == 0
    assert "Hessian/QGT pairing" in capsys.readouterr().out
    with (run / "trace.csv").open("a") as fh:
        fh.write("999,0,0,,,,,,,\n")
    with pytest.raises(IntegrityError, match="row count"):
        verify_manifest(run)
    assert main(["report", str(run)]) == 1


def test_resume(out):
    base = ["train", "--L", "4", "--alpha", "1", "--lr", "0.1", "--epsilon", "1e-4"]
    assert main(base + ["--iterations", "20"]) == 0
    first = _only_dir(out)
    assert main(base + ["--iterations", "10", "--resume", str(first / "params.ckpt"),
                        "--output-root", str(out / "resumed")]) == 0
    assert main(base + ["--iterations", "30", "--output-root", str(out / "full")]) == 0
    _, resumed = read_csv(_only_dir(out / "resumed") / "trace.csv")
    _, full = read_csv(_only_dir(out / "full") / "trace.csv")
    assert resumed[0][:2] == full[20][:2]
    assert resumed[-1][1] == full[-1][1]


def test_resume_shape_mismatch(out):
    assert main(["train", "--L", "4", "--alpha", "1", "--iterations", "2"]) == 0
    ckpt = _only_dir(out) / "params.ckpt"
    assert main(["train", "--L", "4", "--alpha", "2", "--iterations", "2", "--resume", str(ckpt)]) == 2


def test_sweep(out):
    assert main(["sweep-alpha", "--L", "4", "--alphas", "1,2", "--iterations", "20"]) == 0
    run = _only_dir(out)
    header, rows = read_csv(run / "sweep.csv")
    assert header[:3] == ["alpha", "n_params", "final_infidelity"]
    assert [int(r[1]) for r in rows] == [44, 80]
    assert all(r[7] == "ok" for r in rows)
    assert all(int(r[3]) <= int(r[4]) for r in rows)
    assert "alpha" in cmd_report(run)

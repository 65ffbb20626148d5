from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from causalda.cli import main

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def small_config(tmp_path, **kw):
    cfg = {"sem": {"m": 5, "sigma": 0.1}, "methods": ["ERM", "DA_ERM", "DA_IVL(cc)"],
           "n": 200, "trials": 2, "master_seed": 1, "output": {"dir": str(tmp_path / "out")}}
    cfg.update(kw)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return path


def test_validate_ok_and_invalid(tmp_path, capsys):
    assert main(["validate", "--config", str(CONFIGS / "kappa_sweep.json")]) == 0
    assert main(["validate", "--config", str(small_config(tmp_path, methods=[]))]) == 1
    assert main(["validate", "--config", str(tmp_path / "missing.json")]) == 1


def test_validate_bare_sem(tmp_path, capsys):
    path = tmp_path / "sem.json"
    path.write_text(json.dumps({"f": [1.0], "tau": [1.0], "conf_x": [[1.0]], "conf_y": [1.0],
                                "kappa": 1.0}))
    assert main(["validate", "--config", str(path)]) == 1
    assert "solvable: FAIL" in capsys.readouterr().out
    path.write_text(json.dumps({"f": [0.5], "tau": [0.5], "conf_x": [[1.0]], "conf_y": [1.0]}))
    assert main(["validate", "--config", str(path)]) == 0


def test_sweep_with_overrides(tmp_path):
    cfg = small_config(tmp_path)
    out = tmp_path / "sweep"
    code = main(["sweep", "--config", str(cfg), "--axis", "kappa", "--values", "0,0.5,1",
                 "--trials", "2", "--n", "150", "--seed", "9", "--out", str(out), "--workers", "1"])
    assert code == 0
    for name in ("trials.csv", "aggregate.csv", "plot.svg", "config.json"):
        assert (out / name).exists()
    echoed = json.loads((out / "config.json").read_text())["config"]
    assert echoed["master_seed"] == 9 and echoed["n"] == 150
    assert echoed["sweep"] == {"axis": "kappa", "values": [0.0, 0.5, 1.0]}
    assert main(["plot", str(out / "aggregate.csv"), "--axis", "kappa",
                 "--out", str(tmp_path / "p.svg")]) == 0
    assert (tmp_path / "p.svg").read_bytes() == (out / "plot.svg").read_bytes()


def test_sweep_invalid_values(tmp_path):
    cfg = small_config(tmp_path)
    assert main(["sweep", "--config", str(cfg), "--axis", "alpha", "--values", "0,1"]) == 1


def test_run_prints_and_writes(tmp_path, capsys):
    cfg = small_config(tmp_path)
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "r")]) == 0
    assert "nCER=" in capsys.readouterr().out
    assert (tmp_path / "r" / "run.csv").exists()


def test_run_with_failing_method_is_runtime_error(tmp_path):
    sem = {"f": [0.0, 0.0], "conf_x": [[1.0], [1.0]], "conf_y": [1.0], "sigma": 0.1}
    cfg = small_config(tmp_path, sem=sem)
    assert main(["run", "--config", str(cfg)]) == 2


def test_plot_schema_error(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n")
    assert main(["plot", str(bad)]) == 1


def test_ingest_synthetic(tmp_path, capsys):
    assert main(["ingest", "--synthetic", "--out", str(tmp_path / "ing")]) == 0
    truth = json.loads((tmp_path / "ing" / "truth.json").read_text())
    assert truth["degree"] in range(1, 6)
    assert np.isfinite(truth["coef"]).all()
    assert "nCER" in capsys.readouterr().out


def test_ingest_missing_roles(tmp_path):
    main(["ingest", "--synthetic", "--out", str(tmp_path / "ing")])
    spec = {"path": str(tmp_path / "ing" / "synthetic.csv"),
            "roles": {"x": ["x_0", "x_1"], "y": "y", "c": []}}
    path = tmp_path / "ingest.json"
    path.write_text(json.dumps(spec))
    assert main(["ingest", "--config", str(path), "--out", str(tmp_path / "o")]) == 1


def test_demo_discrete(capsys):
    assert main(["demo-discrete", "--n", "5000", "--seed", "0"]) == 0
    assert "ATE predictor accuracy" in capsys.readouterr().out
    assert main(["demo-discrete", "--n", "0"]) == 1

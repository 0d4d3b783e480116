import json
import subprocess
import sys
from pathlib import Path

import numpy as np

from kbinfer.cli import main
from kbinfer.config import apply_overrides, config_hash, validate_config

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


def tiny_rate_config(tmp_path, **overrides):
    cfg = json.loads((CONFIG_DIR / "rate_check.json").read_text())
    cfg["replicates"] = 3
    cfg["sizes"] = [20, 40, 80, 160]
    cfg["output"] = str(tmp_path / "out")
    cfg.update(overrides)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return path


def run_cli(args, env=None):
    import os

    full_env = dict(os.environ)
    if env:
        full_env.update(env)
    return subprocess.run(
        [sys.executable, "-m", "kbinfer.cli", *args],
        capture_output=True, text=True, env=full_env,
    )


def test_validate_reference_configs():
    for cfg_file in sorted(CONFIG_DIR.glob("*.json")):
        cfg = json.loads(cfg_file.read_text())
        assert validate_config(cfg) == [], cfg_file.name


def test_validate_ok_exit_code(tmp_path):
    path = tiny_rate_config(tmp_path)
    assert main(["validate", str(path)]) == 0


def test_missing_config_file_is_config_error(capsys):
    assert main(["run", "/nonexistent/config.json"]) == 1
    err = capsys.readouterr().err
    assert "/nonexistent/config.json" in err


def test_unknown_field_rejected(tmp_path):
    path = tiny_rate_config(tmp_path, bogus=1)
    assert main(["validate", str(path)]) == 1


def test_non_spd_covariance_named(tmp_path, capsys):
    path = tiny_rate_config(
        tmp_path, model={"A": [[1.0, 0.0], [0.0, 1.0]],
                         "Sigma": [[1.0, 2.0], [2.0, 1.0]]}
    )
    assert main(["validate", str(path)]) == 1
    out = capsys.readouterr().out
    assert "model" in out
    assert "positive definite" in out


def test_missing_eta_named(tmp_path):
    cfg = json.loads((CONFIG_DIR / "filter_bench.json").read_text())
    del cfg["ssm"]["eta"]
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    errors = validate_config(json.loads(path.read_text()))
    assert any(e.startswith("ssm.eta") for e in errors)


def test_list_experiments(capsys):
    assert main(["list-experiments"]) == 0
    out = capsys.readouterr().out
    for kind in ("ground-truth", "chain", "filter-bench", "rate-check",
                 "misspecification"):
        assert kind in out


def test_run_writes_csv_and_manifest(tmp_path, capsys):
    path = tiny_rate_config(tmp_path)
    assert main(["run", str(path)]) == 0
    printed = capsys.readouterr().out.splitlines()
    csv_path, manifest_path = Path(printed[0]), Path(printed[1])
    assert csv_path.exists() and manifest_path.exists()
    header = csv_path.read_text().splitlines()[0]
    assert header == "experiment,config_hash,replicate,series,x,metric,value"
    manifest = json.loads(manifest_path.read_text())
    assert manifest["config"]["sizes"] == [20, 40, 80, 160]
    assert manifest["csv"] == csv_path.name
    assert manifest["config_hash"] == config_hash(manifest["config"])


def test_overrides_change_hash_and_values(tmp_path):
    cfg = {"a": {"b": 1}, "c": 2}
    apply_overrides(cfg, ["a.b=7", "c=hello", "d=[1,2]"])
    assert cfg == {"a": {"b": 7}, "c": "hello", "d": [1, 2]}


def test_run_deterministic_across_thread_counts(tmp_path):
    cfg = json.loads((CONFIG_DIR / "ground_truth.json").read_text())
    cfg["replicates"] = 4
    cfg["n_train"] = 40
    cfg["n_input"] = 40
    cfg["output"] = str(tmp_path / "a")
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg))

    r1 = run_cli(["run", str(p), "--out", str(tmp_path / "a")],
                 env={"KB_THREADS": "1"})
    r2 = run_cli(["run", str(p), "--out", str(tmp_path / "b")],
                 env={"KB_THREADS": "4"})
    assert r1.returncode == 0 and r2.returncode == 0, r1.stderr + r2.stderr
    csv1 = next((tmp_path / "a").glob("*.csv")).read_bytes()
    csv2 = next((tmp_path / "b").glob("*.csv")).read_bytes()
    assert csv1 == csv2


def test_run_same_seed_byte_identical(tmp_path):
    path = tiny_rate_config(tmp_path)
    r1 = run_cli(["run", str(path), "--out", str(tmp_path / "x")])
    r2 = run_cli(["run", str(path), "--out", str(tmp_path / "y")])
    assert r1.returncode == 0 and r2.returncode == 0
    b1 = next((tmp_path / "x").glob("*.csv")).read_bytes()
    b2 = next((tmp_path / "y").glob("*.csv")).read_bytes()
    assert b1 == b2


def test_csv_floats_round_trip(tmp_path, capsys):
    path = tiny_rate_config(tmp_path)
    assert main(["run", str(path)]) == 0
    csv_path = Path(capsys.readouterr().out.splitlines()[0])
    import csv as csv_mod

    rows = list(csv_mod.DictReader(open(csv_path)))
    for row in rows:
        val = float(row["value"])
        assert repr(val) == row["value"]


def test_filter_bench_tiny_run(tmp_path, capsys):
    cfg = json.loads((CONFIG_DIR / "filter_bench.json").read_text())
    cfg.update(
        replicates=1,
        n_train=[40],
        t_test=6,
        cv={"epsilon": [0.01], "delta": [0.01], "sigma_x": [0.5],
            "sigma_z": [0.3], "horizon": 5},
        output=str(tmp_path / "out"),
    )
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg))
    assert main(["run", str(p)]) == 0
    csv_path = Path(capsys.readouterr().out.splitlines()[0])
    text = csv_path.read_text()
    assert "model_based" in text and "fkbf" in text and "mse" in text


def test_trajectory_and_weight_dumps(tmp_path, capsys):
    cfg = json.loads((CONFIG_DIR / "filter_bench.json").read_text())
    cfg.update(
        replicates=1,
        n_train=[40],
        t_test=5,
        cv={"epsilon": [0.01], "delta": [0.001], "sigma_x": [0.5],
            "sigma_z": [0.3], "horizon": 5},
        output=str(tmp_path / "out"),
        trajectory_dir=str(tmp_path / "traj"),
        dump_weights=True,
    )
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg))
    assert main(["run", str(p)]) == 0
    capsys.readouterr()
    traj = sorted((tmp_path / "traj").glob("*.csv"))
    names = [t.name for t in traj]
    assert "model_based_n40_rep0.csv" in names
    assert "model_based_n40_rep0_weights.csv" in names
    weights = (tmp_path / "traj" / "model_based_n40_rep0_weights.csv")
    lines = weights.read_text().splitlines()
    assert lines[0] == "t,x0,x1,weight"
    assert len(lines) == 1 + 5 * 40

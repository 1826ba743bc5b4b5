import json
import math
import os
import subprocess
import sys

import pytest

from exchwalk.oracles import kernel_1d_uniformization

VELOCITY_CFG = {
    "kind": "velocity",
    "d": 1,
    "mu": {"atoms": [{"probs": [0.1, 0.9], "weight": 0.8},
                      {"probs": [0.9, 0.1], "weight": 0.2}]},
    "T": 30,
    "replicas": 4,
    "gammas": [1.0],
    "seed": 11,
    "driver": "lazy",
}


def run_cli(*args, env=None):
    full_env = dict(os.environ)
    if env:
        full_env.update(env)
    return subprocess.run(
        [sys.executable, "-m", "exchwalk.cli", *args],
        capture_output=True,
        text=True,
        env=full_env,
    )


def write_cfg(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def test_validate_config_ok(tmp_path):
    cfg = write_cfg(tmp_path, VELOCITY_CFG)
    out = tmp_path / "echo"
    proc = run_cli("validate-config", "--config", cfg, "--out", str(out))
    assert proc.returncode == 0, proc.stderr
    assert json.loads(proc.stdout)["valid"] is True
    echo = json.loads((out / "config_echo.json").read_text())
    assert echo["kind"] == "velocity" and echo["delta_trunc"] == 1e-9


def test_validate_config_rejects_unknown_key(tmp_path):
    bad = dict(VELOCITY_CFG)
    bad["bogus"] = True
    cfg = write_cfg(tmp_path, bad)
    proc = run_cli("validate-config", "--config", cfg)
    assert proc.returncode == 2
    err = json.loads(proc.stdout)["error"]
    assert err["type"] == "ConfigError" and "bogus" in err["message"]


def test_experiment_deterministic_bytes(tmp_path):
    cfg = write_cfg(tmp_path, VELOCITY_CFG)
    p1 = run_cli("experiment", "velocity", "--config", cfg, "--out", str(tmp_path / "a"),
                 "--seed", "7")
    p2 = run_cli("experiment", "velocity", "--config", cfg, "--out", str(tmp_path / "b"),
                 "--seed", "7")
    assert p1.returncode == 0 and p2.returncode == 0, p1.stderr + p2.stderr
    a_csv = (tmp_path / "a" / "velocity.csv").read_bytes()
    b_csv = (tmp_path / "b" / "velocity.csv").read_bytes()
    assert a_csv == b_csv
    a_json = (tmp_path / "a" / "velocity.json").read_bytes()
    b_json = (tmp_path / "b" / "velocity.json").read_bytes()
    assert a_json == b_json
    echo = json.loads((tmp_path / "a" / "config_echo.json").read_text())
    assert echo["seed"] == 7  # flag beats the file value


def test_seed_precedence_env(tmp_path):
    cfg = write_cfg(tmp_path, VELOCITY_CFG)
    proc = run_cli(
        "experiment", "--config", cfg, "--out", str(tmp_path / "e"),
        env={"EXCHWALK_SEED": "23"},
    )
    assert proc.returncode == 0, proc.stderr
    echo = json.loads((tmp_path / "e" / "config_echo.json").read_text())
    assert echo["seed"] == 23


def test_experiment_kind_mismatch(tmp_path):
    cfg = write_cfg(tmp_path, VELOCITY_CFG)
    proc = run_cli("experiment", "concentration", "--config", cfg, "--out", str(tmp_path / "x"))
    assert proc.returncode == 2


def test_kernel_table_matches_oracle(tmp_path):
    table = tmp_path / "kernel.csv"
    proc = run_cli("kernel", "--d", "1", "--gamma", "1", "--t", "1", "--table", str(table))
    assert proc.returncode == 0, proc.stderr
    lines = table.read_text().splitlines()
    assert lines[0].startswith("# exchwalk-kernel schema_version=1")
    rows = {int(ln.split(",")[0]): float(ln.split(",")[1]) for ln in lines[2:]}
    oracle = kernel_1d_uniformization(1.0, 1.0, 0)
    assert rows[0] == pytest.approx(oracle, rel=1e-10)
    assert math.fsum(rows.values()) >= 1 - 1e-10


def test_kernel_checks_report(tmp_path):
    checks = tmp_path / "checks.json"
    proc = run_cli(
        "kernel", "--d", "2", "--gamma", "1", "--t", "2", "--checks", str(checks),
        "--M", "2", "--r-check", "10",
    )
    assert proc.returncode == 0, proc.stderr
    doc = json.loads(checks.read_text())
    assert doc["monotonicity_worst"] <= 1e-12
    assert doc["crown_ordering_worst"] <= 1e-12
    assert len(doc["grid"]) == 3
    assert doc["grid"][0]["crown_sums"]["total"] >= 0
    assert doc["grid"][0]["lclt"]["scaled"] > 0


def test_kernel_requires_an_output(tmp_path):
    proc = run_cli("kernel", "--d", "1", "--gamma", "1", "--t", "1")
    assert proc.returncode == 2


def test_simulate_trajectory(tmp_path):
    cfg = write_cfg(
        tmp_path,
        {"d": 1, "mu": VELOCITY_CFG["mu"], "gamma": 2.0, "T": 25, "driver": "lazy", "seed": 4},
        name="sim.json",
    )
    out = tmp_path / "sim"
    proc = run_cli("simulate", "--config", cfg, "--out", str(out))
    assert proc.returncode == 0, proc.stderr
    lines = (out / "trajectory.csv").read_text().splitlines()
    assert lines[1] == "k,x_1,X_v"
    assert len(lines) == 2 + 26
    xs = [int(ln.split(",")[1]) for ln in lines[2:]]
    assert xs[0] == 0
    assert all(abs(a - b) == 1 for a, b in zip(xs, xs[1:]))
    doc = json.loads((out / "result.json").read_text())
    assert doc["final_position"] == [xs[-1]]


def test_simulate_invalid_simplex_is_precondition_error(tmp_path):
    cfg = write_cfg(
        tmp_path,
        {"d": 1, "mu": {"atoms": [{"probs": [0.5, 0.6], "weight": 1.0}]},
         "gamma": 1.0, "T": 5},
        name="bad.json",
    )
    proc = run_cli("simulate", "--config", cfg, "--out", str(tmp_path / "x"))
    assert proc.returncode == 3
    assert json.loads(proc.stdout)["error"]["type"] == "InvalidSimplexError"


def test_schedule_subcommand():
    proc = run_cli("schedule", "--T", "27", "--t", "81", "--epsilon", "0.5", "--v", "0.48")
    assert proc.returncode == 0, proc.stderr
    doc = json.loads(proc.stdout)
    assert doc["times"] == [9, 81]
    assert doc["rungs"][0]["t_n"] == 9
    assert isinstance(doc["rungs"][0]["passes"], bool)


def test_missing_config_file():
    proc = run_cli("validate-config", "--config", "/nonexistent/x.json")
    assert proc.returncode == 2

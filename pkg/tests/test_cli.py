"""
Test: scenario configs and the command-line surface.
"""
import csv
import json

import pytest

from cli.config import ScenarioConfig, load_config
from cli.main import EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION, run
from hystsir.certify import delta_threshold
from hystsir.density import UniformDensity
from hystsir.errors import ConfigError, StepFailure

BASE = {
    "r0_nat": 2.0,
    "r0_int": 2.0,
    "rho": 0.5,
    "density": {"kind": "uniform"},
    "initial": {"I0": 0.1, "S0": 0.8, "memory": "virgin"},
    "integrator": {"t_max": 200.0},
    "seed": 1,
}


def write_config(tmp_path, **overrides) -> str:
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps({**BASE, **overrides}))
    return str(path)


def read_json(path):
    return json.loads(path.read_text())


def test_config_round_trip(tmp_path):
    config = load_config(write_config(tmp_path, corpus=2))
    again = ScenarioConfig.model_validate_json(config.model_dump_json())
    assert again == config
    assert again.resolved() == config.resolved()


def test_config_rejects_unknown_fields(tmp_path):
    out = tmp_path / "out"
    assert run(["simulate", "--config", write_config(tmp_path, colour="red"), "--out", str(out)]) == EXIT_VALIDATION


def test_config_rejects_bad_phase_space(tmp_path):
    cfg = write_config(tmp_path, initial={"I0": 0.0, "S0": 0.5})
    assert run(["simulate", "--config", cfg, "--out", str(tmp_path / "out")]) == EXIT_VALIDATION


def test_config_rejects_bad_hypotheses(tmp_path):
    cfg = write_config(tmp_path, r0_int=0.9)
    assert run(["certify", "--config", cfg, "--out", str(tmp_path / "out")]) == EXIT_VALIDATION


def test_unreadable_config(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(["simulate", "--config", str(bad)]) == EXIT_VALIDATION


def test_simulate(tmp_path):
    out = tmp_path / "out"
    assert run(["simulate", "--config", write_config(tmp_path), "--out", str(out)]) == EXIT_OK
    summary = read_json(out / "summary.json")
    assert summary["outcome"] == "equilibrium"
    assert summary["limit"] == pytest.approx([0.25, 0.5], abs=1e-8)
    assert summary["on_segment"]
    assert summary["prng"] == "PCG64"
    assert summary["config"]["r0_nat"] == 2.0
    assert (out / "trajectory.csv").exists()


def test_simulate_is_deterministic(tmp_path):
    cfg = write_config(tmp_path, corpus=2, integrator={"t_max": 20.0})
    run(["simulate", "--config", cfg, "--out", str(tmp_path / "a")])
    run(["simulate", "--config", cfg, "--out", str(tmp_path / "b")])
    for name in ("trajectory.csv", "trajectory_0001.csv", "trajectory_0002.csv"):
        assert (tmp_path / "a" / name).read_text() == (tmp_path / "b" / name).read_text()


def test_loop_diagram(tmp_path):
    out = tmp_path / "out"
    cfg = write_config(tmp_path, r0_int=1.5)
    assert run(["loop-diagram", "--config", cfg, "--program", "0.6,0.3,0.6", "--out", str(out)]) == EXIT_OK
    with (out / "loop.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert float(rows[0]["R0"]) == 2.0
    # the loop closes at the output reached before it
    first_top = next(r for r in rows if float(r["I"]) == 0.6)
    assert abs(float(rows[-1]["R0"]) - float(first_top["R0"])) < 1e-12
    assert abs(float(rows[-1]["R0"]) - 1.82) < 1e-12


def test_certify(tmp_path):
    out = tmp_path / "out"
    assert run(["certify", "--config", write_config(tmp_path), "--out", str(out)]) == EXIT_OK
    cert = read_json(out / "certificate.json")
    assert cert["verdict"] == "certified"
    assert read_json(out / "summary.json")["verdict"] == "certified"


def test_equilibria(tmp_path):
    out = tmp_path / "out"
    cfg = write_config(tmp_path, r0_int=1.8, rho=0.1)
    assert run(["equilibria", "--config", cfg, "--out", str(out)]) == EXIT_OK
    with (out / "equilibria.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 101
    for row in rows:
        I, S = float(row["I"]), float(row["S"])
        assert abs(S - (1.0 - I / 0.1)) < 1e-12


def test_verify_lemmas(tmp_path):
    out = tmp_path / "out"
    cfg = write_config(tmp_path, r0_int=1.8, rho=0.1, initial={"I0": 0.3, "S0": 0.4},
                       integrator={"t_max": 400.0})
    assert run(["verify-lemmas", "--config", cfg, "--out", str(out)]) == EXIT_OK
    rows = read_json(out / "lemma_report.json")
    assert rows and all(row["run"] == 0 for row in rows)
    assert set(rows[0]) == {"run", "lemma", "k", "lhs", "rhs", "margin", "pass"}
    assert read_json(out / "summary.json")["failures"] == 0


def test_sweep_needs_grid(tmp_path):
    assert run(["sweep", "--config", write_config(tmp_path), "--out", str(tmp_path / "out")]) == EXIT_VALIDATION


def test_delta_sweep_kappa_changes_sign_once(tmp_path):
    delta_star = delta_threshold(2.0, 0.5, UniformDensity())
    values = [0.0, 0.1 * delta_star, 0.5 * delta_star, 2.0 * delta_star, 10.0 * delta_star, 0.5]
    cfg = write_config(tmp_path, sweep={"axis": "delta", "values": values}, integrator={"t_max": 100.0})
    out = tmp_path / "out"
    assert run(["sweep", "--config", cfg, "--out", str(out), "--jobs", "1"]) == EXIT_OK
    with (out / "sweep.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert [float(r["delta"]) for r in rows] == values
    signs = [int(r["kappa_sign"]) for r in rows]
    assert signs == [1, 1, 1, -1, -1, -1]
    assert rows[0]["outcome"] == "equilibrium"
    assert all(r["error"] == "" for r in rows)
    # I starts at 0.1 with R0 S = 1.6 > 1, so every run first climbs
    assert all(0.1 < float(r["peak_I"]) <= 1.0 for r in rows)


def test_threshold_sweep_finds_orbit(tmp_path):
    cfg = write_config(
        tmp_path,
        r0_int=1.2,
        initial={"I0": 0.15, "S0": 0.6},
        integrator={},
        sweep={"axis": "thresholds", "a1": [0.12], "a2": [0.18, 0.9]},
    )
    out = tmp_path / "out"
    assert run(["sweep", "--config", cfg, "--out", str(out)]) == EXIT_OK
    with (out / "sweep.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert [r["outcome"] for r in rows][0] == "orbit"
    assert all(int(r["kappa_sign"]) == -1 for r in rows)
    assert read_json(out / "summary.json")["outcomes"]["orbit"] >= 1


def test_runtime_failure_exit_code(tmp_path, monkeypatch):
    def fail(*args, **kwargs):
        raise StepFailure("step size underflow")

    monkeypatch.setattr("cli.commands.integrate", fail)
    assert run(["simulate", "--config", write_config(tmp_path), "--out", str(tmp_path / "out")]) == EXIT_RUNTIME


def test_unexpected_failure_exit_code(tmp_path, monkeypatch):
    def fail(*args, **kwargs):
        raise ValueError("f(a) and f(b) must have different signs")

    monkeypatch.setattr("cli.commands.integrate", fail)
    assert run(["simulate", "--config", write_config(tmp_path), "--out", str(tmp_path / "out")]) == EXIT_RUNTIME

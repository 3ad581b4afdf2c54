"""HystSIR - CLI commands

Each command writes its data files plus a summary.json that carries the fully
resolved config, and returns the summary.
"""
import csv
import json
import logging
import math
from multiprocessing import Pool
from pathlib import Path
from typing import Optional

import numpy as np
from rich.progress import Progress

from cli.config import PRNG_NAME, ScenarioConfig
from hystsir.certify import compute_certificate, kappa_at
from hystsir.density import AtomicDensity, AtomicRelay, gaussian_grid_density
from hystsir.dynamics import (
    SirParams,
    endemic_segment,
    integrate,
    random_initial_states,
    trajectory_to_csv,
)
from hystsir.errors import ConfigError, HysteresisError
from hystsir.lyapunov import verify_lemmas
from hystsir.preisach import operator_from, trace_program
from hystsir.state import EndemicSegment, LemmaReport, SirState, Trajectory

logger = logging.getLogger(__name__)

# Distance to the endemic segment accepted as "on the segment"
SEGMENT_TOL = 1e-6


def _write_json(path: Path, payload) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2))
    return path


def _summary(config: ScenarioConfig, command: str, **fields) -> dict:
    return {"command": command, **fields, "prng": PRNG_NAME, "config": config.resolved()}


def _out_dir(config: ScenarioConfig, out: Optional[Path]) -> Path:
    path = Path(out) if out is not None else Path(config.output)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _initial_states(config: ScenarioConfig) -> list[SirState]:
    states = [config.initial_state()]
    if config.corpus:
        states.extend(random_initial_states(config.corpus, config.seed))
    return states


def _run_summary(traj: Trajectory, segment: EndemicSegment) -> dict:
    limit = traj.limit
    return {
        "converged": traj.converged,
        "outcome": traj.outcome.value,
        "limit": list(limit) if limit else None,
        "on_segment": bool(limit and segment.contains(*limit, tol=SEGMENT_TOL)),
        "n_switches": len(traj.switch_times),
        "orbit_detected": traj.orbit_detected,
        "grazing_suspected": traj.grazing_suspected,
    }


# ============== SIMULATE ==============

def cmd_simulate(config: ScenarioConfig, out: Optional[Path] = None) -> dict:
    out_dir = _out_dir(config, out)
    params = config.params()
    segment = endemic_segment(params)

    runs = []
    for n, state in enumerate(_initial_states(config)):
        traj = integrate(params, state, cfg=config.integrator)
        name = "trajectory.csv" if n == 0 else f"trajectory_{n:04d}.csv"
        trajectory_to_csv(traj, out_dir / name)
        runs.append({"I0": state.I, "S0": state.S, **_run_summary(traj, segment)})

    summary = _summary(
        config,
        "simulate",
        **runs[0],
        segment={"I_lo": segment.I_lo, "I_hi": segment.I_hi},
        corpus=runs[1:],
    )
    _write_json(out_dir / "summary.json", summary)
    logger.info(f"simulate: {runs[0]['outcome']} limit={runs[0]['limit']} ({len(runs)} runs)")
    return summary


# ============== LOOP DIAGRAM ==============

def cmd_loop_diagram(
    config: ScenarioConfig,
    program: list[float],
    out: Optional[Path] = None,
    points: int = 50,
) -> dict:
    """(I, R0) samples of a virgin operator driven through program"""
    out_dir = _out_dir(config, out)
    op = operator_from(config.density, config.r0_nat, config.r0_int)
    samples, final = trace_program(op, program, points=points)

    path = out_dir / "loop.csv"
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["I", "R0"])
        for I, R0 in samples:
            writer.writerow([repr(I), repr(R0)])

    summary = _summary(
        config,
        "loop-diagram",
        program=list(program),
        n_samples=len(samples),
        final={"I": samples[-1][0], "R0": samples[-1][1]},
        final_memory=list(final.memory.extrema),
    )
    _write_json(out_dir / "summary.json", summary)
    return summary


# ============== CERTIFY ==============

def cmd_certify(config: ScenarioConfig, out: Optional[Path] = None) -> dict:
    out_dir = _out_dir(config, out)
    cert = compute_certificate(config.params())
    payload = json.loads(cert.model_dump_json())
    (out_dir / "certificate.json").write_text(json.dumps(payload, indent=2))
    summary = _summary(config, "certify", verdict=cert.verdict.value, certificate=payload)
    _write_json(out_dir / "summary.json", summary)
    return summary


# ============== VERIFY LEMMAS ==============

def cmd_verify_lemmas(config: ScenarioConfig, out: Optional[Path] = None) -> dict:
    """Lemma report over fresh simulations of the initial state and the corpus"""
    out_dir = _out_dir(config, out)
    params = config.params()
    cert = compute_certificate(params)

    report = LemmaReport()
    rows = []
    for n, state in enumerate(_initial_states(config)):
        traj = integrate(params, state, cfg=config.integrator)
        run = verify_lemmas(params, traj, certificate=cert)
        report.extend(run)
        rows.extend({"run": n, **row} for row in run.rows())

    _write_json(out_dir / "lemma_report.json", rows)
    failures = report.failures
    summary = _summary(
        config,
        "verify-lemmas",
        rows=len(rows),
        failures=len(failures),
        failed_lemmas=sorted({r.lemma for r in failures}),
        verdict=cert.verdict.value,
    )
    _write_json(out_dir / "summary.json", summary)
    logger.info(f"verify-lemmas: {len(rows)} rows, {len(failures)} failures")
    return summary


# ============== EQUILIBRIA ==============

def cmd_equilibria(config: ScenarioConfig, out: Optional[Path] = None, points: int = 101) -> dict:
    out_dir = _out_dir(config, out)
    segment = endemic_segment(config.params())
    path = out_dir / "equilibria.csv"
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["theta", "I", "S", "R0"])
        for theta in np.linspace(0.0, 1.0, points):
            I, S = segment.point(float(theta))
            writer.writerow([repr(float(theta)), repr(I), repr(S), repr(segment.r0(float(theta)))])
    summary = _summary(
        config,
        "equilibria",
        I_lo=segment.I_lo,
        I_hi=segment.I_hi,
        degenerate=segment.is_degenerate,
    )
    _write_json(out_dir / "summary.json", summary)
    return summary


# ============== SWEEP ==============

def _cell_config(config: ScenarioConfig, cell: dict) -> ScenarioConfig:
    update = {"sweep": None, "corpus": 0}
    if "delta" in cell:
        update["r0_int"] = config.r0_nat - cell["delta"]
    elif "sigma" in cell:
        spec = config.sweep
        update["density"] = gaussian_grid_density(tuple(spec.center), cell["sigma"], n=spec.n)
    else:
        update["density"] = AtomicDensity(relays=[AtomicRelay(a1=cell["a1"], a2=cell["a2"], w=1.0)])
    payload = {**config.model_dump(), **update}
    return ScenarioConfig.model_validate(payload)


RESULT_COLUMNS = ("outcome", "limit_I", "limit_S", "peak_I", "kappa_sign", "error")


def sweep_cell(job: tuple[str, dict]) -> dict:
    """One sweep cell; errors are returned in the row"""
    config_json, cell = job
    config = ScenarioConfig.model_validate_json(config_json)
    row = {**cell, "outcome": "", "limit_I": math.nan, "limit_S": math.nan,
           "peak_I": math.nan, "kappa_sign": 0, "error": ""}
    try:
        cell_config = _cell_config(config, cell)
        params: SirParams = cell_config.params()
        op = params.operator
        kappa = kappa_at(op.r0_nat, op.delta, params.rho, params.density.sup_q)
        row["kappa_sign"] = int(np.sign(float(kappa)))
        traj = integrate(params, cell_config.initial_state(), cfg=cell_config.integrator)
        row["outcome"] = traj.outcome.value
        row["limit_I"], row["limit_S"] = traj.I[-1], traj.S[-1]
        row["peak_I"] = float(np.max(traj.I))
    except (HysteresisError, ValueError) as e:
        row["error"] = f"{type(e).__name__}: {e}"
    return row


def cmd_sweep(config: ScenarioConfig, out: Optional[Path] = None, jobs: int = 1) -> dict:
    if config.sweep is None:
        raise ConfigError("sweep requires a 'sweep' section in the config")
    out_dir = _out_dir(config, out)
    config_json = config.model_dump_json()
    cells = config.sweep.cells()
    work = [(config_json, cell) for cell in cells]

    rows: list[dict] = []
    with Progress() as progress:
        task = progress.add_task(f"sweep over {config.sweep.axis}", total=len(work))
        if jobs > 1:
            with Pool(processes=jobs) as pool:
                # imap keeps the grid order
                for row in pool.imap(sweep_cell, work):
                    rows.append(row)
                    progress.advance(task)
        else:
            for job in work:
                rows.append(sweep_cell(job))
                progress.advance(task)

    keys = [k for k in rows[0] if k not in RESULT_COLUMNS]
    header = [*keys, *RESULT_COLUMNS]
    path = out_dir / "sweep.csv"
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=header)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})

    counts = {}
    for row in rows:
        counts[row["outcome"] or "error"] = counts.get(row["outcome"] or "error", 0) + 1
    summary = _summary(config, "sweep", axis=config.sweep.axis, cells=len(rows), outcomes=counts)
    _write_json(out_dir / "summary.json", summary)
    logger.info(f"sweep: {len(rows)} cells, outcomes {counts}")
    return summary

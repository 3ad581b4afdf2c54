"""
Test: switched SIR dynamics, equilibria and the endemic segment.
"""
import csv

import numpy as np
import pytest
from pydantic import ValidationError

from conftest import make_params
from hystsir.density import UniformDensity
from hystsir.dynamics import (
    SirParams,
    branch_endemic,
    classify_focus,
    endemic_jacobian_eigenvalues,
    endemic_segment,
    field_on_branch,
    infection_free,
    initial_state,
    integrate,
    random_initial_states,
    trajectory_to_csv,
    vector_field,
)
from hystsir.errors import InvalidHypotheses
from hystsir.preisach import operator_from
from hystsir.state import (
    Direction,
    EquilibriumType,
    IntegratorConfig,
    MemoryCurve,
    Outcome,
    SirState,
    SwitchKind,
)


def test_rho_must_be_in_unit_interval():
    op = operator_from(UniformDensity(), 2.0, 1.8)
    with pytest.raises(InvalidHypotheses):
        SirParams(rho=1.0, operator=op)
    with pytest.raises(InvalidHypotheses):
        SirParams(rho=0.0, operator=op)


def test_phase_space_validation():
    with pytest.raises(ValidationError):
        initial_state(0.0, 0.5)
    with pytest.raises(ValidationError):
        initial_state(0.6, 0.6)
    with pytest.raises(ValidationError):
        SirState(I=0.3, S=0.3, memory=MemoryCurve(current=0.2))


def test_initial_state_memory_specs():
    assert initial_state(0.3, 0.5).memory == MemoryCurve(current=0.3)
    s = initial_state(0.3, 0.5, [0.7, 0.1])
    assert s.memory.extrema == (0.7, 0.1)


def test_random_initial_states_are_seeded():
    a = random_initial_states(10, seed=7)
    b = random_initial_states(10, seed=7)
    assert [(s.I, s.S) for s in a] == [(s.I, s.S) for s in b]
    assert all(s.I > 0.0 and s.S > 0.0 and s.I + s.S <= 1.0 for s in a)
    assert [(s.I, s.S) for s in random_initial_states(10, seed=8)] != [(s.I, s.S) for s in a]


# ============== EQUILIBRIA ==============

def test_infection_free_point(classical_params):
    point = infection_free(classical_params)
    assert point.eigenvalues == pytest.approx((1.0, -0.5))
    assert point.saddle
    assert point.memory.is_virgin


def test_infection_free_eigenvalues_match_jacobian(uniform_params):
    """Forward-difference Jacobian of the field at (0, 1) has spectrum (r0_nat - 1, -rho)."""
    branch = uniform_params.branch(MemoryCurve())
    rho, h = uniform_params.rho, 1e-7
    base = np.array(field_on_branch(branch, rho, 0.0, 1.0))
    col_I = (np.array(field_on_branch(branch, rho, h, 1.0)) - base) / h
    col_S = (np.array(field_on_branch(branch, rho, 0.0, 1.0 - h)) - base) / -h
    eig = np.sort(np.linalg.eigvals(np.column_stack([col_I, col_S])).real)
    expected = np.sort(infection_free(uniform_params).eigenvalues)
    assert np.allclose(eig, expected, atol=1e-5)
    assert np.allclose(expected, [-0.1, 1.0])


def test_classical_endemic_point(classical_params):
    I, S = branch_endemic(classical_params, MemoryCurve(current=0.1))
    assert I == pytest.approx(0.25, abs=1e-12)
    assert S == pytest.approx(0.5, abs=1e-12)
    dI, dS = vector_field(classical_params, initial_state(I, S))
    assert abs(dI) < 1e-12 and abs(dS) < 1e-12


def test_focus_classification(classical_params):
    assert classify_focus(2.0, 0.5) is EquilibriumType.FOCUS
    assert classify_focus(10.0, 0.5) is EquilibriumType.NODE
    lam = endemic_jacobian_eigenvalues(classical_params, MemoryCurve(current=0.25))
    assert sorted(lam, key=lambda z: z.imag) == [
        pytest.approx(complex(-0.5, -0.5), abs=1e-6),
        pytest.approx(complex(-0.5, 0.5), abs=1e-6),
    ]
    with pytest.raises(InvalidHypotheses):
        classify_focus(0.9, 0.5)


def test_classical_segment_is_a_point(classical_params):
    segment = endemic_segment(classical_params)
    assert segment.is_degenerate
    assert segment.I_lo == pytest.approx(0.25, abs=1e-12)
    assert segment.contains(0.25, 0.5)


def test_uniform_segment(uniform_params):
    segment = endemic_segment(uniform_params)
    assert 0.0 < segment.I_lo < segment.I_hi < uniform_params.rho
    # r0 along the segment stays between the two extreme branch values
    for theta in (0.0, 0.5, 1.0):
        assert 1.8 - 1e-9 <= segment.r0(theta) <= 2.0 + 1e-9


# ============== INTEGRATION ==============

def test_classical_reduction(classical_params):
    """Without hysteresis the trajectory settles at (0.25, 0.5)."""
    traj = integrate(classical_params, initial_state(0.1, 0.8))
    assert traj.outcome is Outcome.EQUILIBRIUM
    I, S = traj.limit
    assert abs(I - 0.25) < 1e-8
    assert abs(S - 0.5) < 1e-8
    # a focus: I oscillates around I*
    assert len(traj.switch_times) >= 2


def test_switch_times_increase(uniform_params):
    traj = integrate(uniform_params, initial_state(0.3, 0.4), t_max=200.0)
    times = [r.t for r in traj.records]
    assert all(a < b for a, b in zip(times, times[1:]))
    assert traj.records[0].kind is SwitchKind.START
    assert sum(traj.switch) == len(traj.records)


def test_turning_points_balance_growth(uniform_params):
    """At each turn of I the transmission balances recovery: R0 S = 1."""
    params = uniform_params
    traj = integrate(params, initial_state(0.3, 0.4), t_max=200.0)
    turns = [r for r in traj.records if r.kind is SwitchKind.TURN]
    assert turns
    for record in turns:
        R = params.branch(record.memory).value(record.I)
        assert abs(R * record.S - 1.0) < 1e-8


def test_directions_alternate(uniform_params):
    traj = integrate(uniform_params, initial_state(0.05, 0.9), t_max=200.0)
    directions = [r.direction for r in traj.records]
    assert all(a is not b for a, b in zip(directions, directions[1:]))


def test_uniform_converges_on_segment(uniform_params):
    segment = endemic_segment(uniform_params)
    for state in random_initial_states(3, seed=11):
        traj = integrate(uniform_params, state)
        assert traj.converged, f"no convergence from ({state.I}, {state.S})"
        assert segment.contains(*traj.limit, tol=1e-6)


@pytest.mark.slow
def test_uniform_corpus_converges_on_segment(uniform_params):
    """100 seeded initial conditions all end on the endemic segment."""
    segment = endemic_segment(uniform_params)
    for state in random_initial_states(100, seed=0):
        traj = integrate(uniform_params, state)
        assert traj.converged
        assert segment.contains(*traj.limit, tol=1e-6)


def test_timeout_outcome(uniform_params):
    traj = integrate(uniform_params, initial_state(0.3, 0.4), cfg=IntegratorConfig(t_max=5.0))
    assert traj.outcome is Outcome.TIMEOUT
    assert traj.limit is None
    assert traj.t[-1] == pytest.approx(5.0)


def test_single_relay_orbit(single_relay):
    """One relay between 0.12 and 0.18 keeps the epidemic oscillating."""
    params = make_params(2.0, 1.2, 0.5, single_relay)
    traj = integrate(params, initial_state(0.15, 0.6))
    assert traj.outcome is Outcome.ORBIT
    assert traj.orbit_detected
    kinds = {r.kind for r in traj.records[1:]}
    assert SwitchKind.THRESHOLD in kinds
    # successive rising-to-falling switch points return to the same place
    returns = [(r.I, r.S) for r in traj.records[1:] if r.direction is Direction.FALLING]
    tol = IntegratorConfig().orbit_tol
    assert len(returns) >= 2
    assert abs(returns[-1][0] - returns[-2][0]) < tol
    assert abs(returns[-1][1] - returns[-2][1]) < tol


def test_trajectory_csv(classical_params, tmp_path):
    traj = integrate(classical_params, initial_state(0.1, 0.8), t_max=20.0)
    path = trajectory_to_csv(traj, tmp_path / "run" / "trajectory.csv")
    with path.open() as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "I", "S", "R0", "switch"]
    assert len(rows) == len(traj.t) + 1
    assert float(rows[1][1]) == 0.1
    assert {r[4] for r in rows[1:]} <= {"0", "1"}

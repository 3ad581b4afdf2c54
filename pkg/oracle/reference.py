"""HystSIR - Brute-force reference computations for tests

Nothing here goes through the memory-curve code: Preisach outputs are sums over
explicit relay ensembles stepped by the relay module, masses are double
integrals of the density pdf, and trajectories use fixed-step RK4.
"""
import logging
from typing import Iterable, NamedTuple, Optional

import numpy as np
from scipy.integrate import dblquad

from hystsir.density import AtomicDensity
from hystsir.errors import InvalidInput
from hystsir.relay import relay_init_many, relay_step_many
from hystsir.state import Outcome, SirState, Trajectory

logger = logging.getLogger(__name__)


# ============== RELAY ENSEMBLES ==============

class Ensemble(NamedTuple):
    alpha1: np.ndarray
    alpha2: np.ndarray
    weights: np.ndarray


def relay_ensemble(density, N: int) -> Ensemble:
    """Relays at the cells of an N x N grid over the Preisach triangle.

    Off-diagonal cells carry a relay at their center; diagonal cells carry one
    at the centroid of their upper half. Atomic densities are used as they are.
    """
    if isinstance(density, AtomicDensity):
        return Ensemble(
            np.array([r.a1 for r in density.relays]),
            np.array([r.a2 for r in density.relays]),
            np.array([r.w for r in density.relays]),
        )
    if N < 2:
        raise InvalidInput(f"ensemble grid needs N >= 2, got {N}")
    h = 1.0 / N
    i, j = np.triu_indices(N)
    diag = i == j
    a1 = np.where(diag, (i + 1.0 / 3.0) * h, (i + 0.5) * h)
    a2 = np.where(diag, (j + 2.0 / 3.0) * h, (j + 0.5) * h)
    area = np.where(diag, 0.5 * h * h, h * h)
    q = np.array([density.pdf(float(x), float(y)) for x, y in zip(a1, a2)])
    return Ensemble(a1, a2, q * area)


def _program_states(ens: Ensemble, program: Iterable[float], start: float = 0.0) -> tuple[np.ndarray, float]:
    states = relay_init_many(ens.alpha1, ens.alpha2, start)
    current = start
    for target in program:
        states = relay_step_many(ens.alpha1, ens.alpha2, states, current, target)
        current = target
    return states, current


def ensemble_output(
    density,
    r0_nat: float,
    r0_int: float,
    N: int,
    input_program: Iterable[float],
    ensemble: Optional[Ensemble] = None,
) -> float:
    """R0 after driving a virgin relay ensemble through input_program.

    A prebuilt ensemble of the same density may be passed to skip the grid setup.
    """
    ens = ensemble if ensemble is not None else relay_ensemble(density, N)
    states, _ = _program_states(ens, input_program)
    return r0_nat - (r0_nat - r0_int) * float(np.dot(ens.weights, states))


# ============== ENDEMIC POINTS ==============

class SegmentScan(NamedTuple):
    I: np.ndarray
    I_lo: float
    I_hi: float


def _mass(density, region: str, I: float) -> float:
    if region == "rise":
        # relays with alpha2 <= I
        value, _ = dblquad(lambda a1, a2: density.pdf(a1, a2), 0.0, I, 0.0, lambda a2: a2,
                           epsabs=1e-13, epsrel=1e-13)
    else:
        # relays with alpha1 < I
        value, _ = dblquad(lambda a2, a1: density.pdf(a1, a2), 0.0, I, lambda a1: a1, 1.0,
                           epsabs=1e-13, epsrel=1e-13)
    return value


def dense_segment_scan(params, grid: int = 10_000, refine: bool = True) -> SegmentScan:
    """Grid points I in (0, rho) at which some attainable branch value makes
    (I, 1 - I/rho) an equilibrium, with bisection-refined endpoints.

    The branch value at I ranges from r0_nat - delta * mass(alpha1 < I) after a
    fall from saturation to r0_nat - delta * mass(alpha2 <= I) after a virgin rise.
    """
    op = params.operator
    rho = params.rho
    delta = op.r0_nat - op.r0_int
    density = op.density

    def feasible(I: float) -> tuple[bool, bool]:
        need = 1.0 / (1.0 - I / rho)
        low_ok = op.r0_nat - delta * _mass(density, "fall", I) <= need
        high_ok = need <= op.r0_nat - delta * _mass(density, "rise", I)
        return low_ok, high_ok

    Is = np.linspace(0.0, rho, grid + 1)[1:-1]
    flags = np.array([feasible(float(I)) for I in Is])
    inside = flags[:, 0] & flags[:, 1]
    if not inside.any():
        return SegmentScan(Is[inside], float("nan"), float("nan"))
    first = int(np.argmax(inside))
    last = len(inside) - 1 - int(np.argmax(inside[::-1]))
    I_lo, I_hi = float(Is[first]), float(Is[last])

    if refine:
        if first > 0:
            I_lo = _bisect(lambda I: feasible(I)[0], float(Is[first - 1]), I_lo)
        if last < len(Is) - 1:
            I_hi = _bisect(lambda I: not feasible(I)[1], I_hi, float(Is[last + 1]), keep="lo")
    logger.debug(f"segment scan: {int(inside.sum())} feasible points, [{I_lo}, {I_hi}]")
    return SegmentScan(Is[inside], I_lo, I_hi)


def _bisect(pred, lo: float, hi: float, keep: str = "hi", iters: int = 80) -> float:
    """Boundary of a predicate that is false at lo and true at hi"""
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if pred(mid):
            hi = mid
        else:
            lo = mid
    return hi if keep == "hi" else lo


# ============== FIXED-STEP INTEGRATION ==============

def _append(traj: Trajectory, t: float, y: np.ndarray, R0: float, switch: bool, k: int) -> None:
    traj.t.append(float(t))
    traj.I.append(float(y[0]))
    traj.S.append(float(y[1]))
    traj.R0.append(R0)
    traj.switch.append(switch)
    traj.branch.append(k)


def _initial_relays(ens: Ensemble, initial: SirState) -> np.ndarray:
    program = [*initial.memory.extrema, initial.memory.current]
    states, _ = _program_states(ens, program)
    return states


def fixed_step_integrate(
    params,
    initial: SirState,
    dt: float,
    t_max: float,
    N: int = 64,
    bisections: int = 60,
) -> Trajectory:
    """Classical RK4 on a relay ensemble, bisecting each step in which I turns.

    Only the samples and the switch flags of the returned Trajectory are filled.
    """
    op = params.operator
    rho = params.rho
    delta = op.r0_nat - op.r0_int
    ens = relay_ensemble(op.density, N)
    states = _initial_relays(ens, initial)

    def R_at(states: np.ndarray, I_from: float, I_to: float) -> float:
        moved = relay_step_many(ens.alpha1, ens.alpha2, states, I_from, min(max(I_to, 0.0), 1.0))
        return op.r0_nat - delta * float(np.dot(ens.weights, moved))

    def rhs(states, I_ref, y):
        R = R_at(states, I_ref, y[0])
        return np.array([R * y[1] * y[0] - y[0], -R * y[1] * y[0] - rho * y[1] + rho])

    def rk4(states, y, h):
        k1 = rhs(states, y[0], y)
        k2 = rhs(states, y[0], y + 0.5 * h * k1)
        k3 = rhs(states, y[0], y + 0.5 * h * k2)
        k4 = rhs(states, y[0], y + h * k3)
        return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    def growth(states, y_ref, y) -> float:
        return R_at(states, y_ref[0], y[0]) * y[1] - 1.0

    t = 0.0
    y = np.array([initial.I, initial.S], dtype=float)
    traj = Trajectory()
    _append(traj, t, y, R_at(states, y[0], y[0]), True, 0)
    sign: Optional[float] = np.sign(growth(states, y, y)) or None
    k = 0

    while t < t_max - 1e-15:
        h = min(dt, t_max - t)
        y_new = rk4(states, y, h)
        g_new = growth(states, y, y_new)
        switched = sign is not None and np.sign(g_new) == -sign
        if switched:
            lo, hi = 0.0, h
            for _ in range(bisections):
                mid = 0.5 * (lo + hi)
                if np.sign(growth(states, y, rk4(states, y, mid))) == -sign:
                    hi = mid
                else:
                    lo = mid
            h = hi
            y_new = rk4(states, y, h)
        states = relay_step_many(ens.alpha1, ens.alpha2, states, y[0], min(max(y_new[0], 0.0), 1.0))
        t += h
        y = y_new
        if switched:
            sign = -sign
            k += 1
        elif sign is None:
            sign = np.sign(growth(states, y, y)) or None
        _append(traj, t, y, R_at(states, y[0], y[0]), bool(switched), k)

    traj.outcome = Outcome.TIMEOUT
    return traj

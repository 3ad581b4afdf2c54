"""HystSIR - Switched SIR dynamics with a Preisach transmission rate

    dI/dt = R0 S I - I
    dS/dt = -R0 S I - rho S + rho

with R0 = R_r(I) following the branch of the current memory r. The memory is
frozen along each monotone stretch of I and committed at turning points.
"""
import csv
import logging
import math
from pathlib import Path
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator
from scipy.integrate import solve_ivp
from scipy.optimize import brentq
from tenacity import (
    Retrying,
    before_sleep_log,
    retry_if_exception_type,
    stop_after_attempt,
)

from hystsir.density import AtomicDensity
from hystsir.errors import (
    GrazingDetected,
    InvalidHypotheses,
    NonFiniteState,
    RootBracketFailure,
    StepFailure,
)
from hystsir.preisach import Branch, PreisachOperator, advance_memory, virgin_rise
from hystsir.state import (
    Direction,
    EndemicSegment,
    EquilibriumType,
    InfectionFreePoint,
    IntegratorConfig,
    MemoryCurve,
    Outcome,
    SirState,
    SwitchKind,
    SwitchRecord,
    Trajectory,
)

logger = logging.getLogger(__name__)

# Switch-point Lyapunov values closer than this count as settled
SETTLED_TOL = 1e-12
# Orbits must have at least this much amplitude in I
ORBIT_MIN_AMPLITUDE = 1e-6


class SirParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    rho: float
    operator: PreisachOperator

    @model_validator(mode="after")
    def _check_rho(self) -> "SirParams":
        if not (0.0 < self.rho < 1.0):
            raise InvalidHypotheses(f"rho must lie in (0, 1), got {self.rho}")
        return self

    @property
    def density(self):
        return self.operator.density

    def branch(self, memory: MemoryCurve) -> Branch:
        return Branch(self.operator.with_memory(memory))


# ============== VECTOR FIELD ==============

def field_on_branch(branch: Branch, rho: float, I: float, S: float) -> tuple[float, float]:
    R = branch.value(I)
    return R * S * I - I, -R * S * I - rho * S + rho


def vector_field(params: SirParams, state: SirState) -> tuple[float, float]:
    """(dI/dt, dS/dt) with R0 taken from the memory frozen in state"""
    branch = params.branch(state.memory)
    return field_on_branch(branch, params.rho, state.I, state.S)


# ============== EQUILIBRIA ==============

def infection_free(params: SirParams) -> InfectionFreePoint:
    """(0, 1) with virgin memory. The Jacobian there is lower triangular."""
    r_nat = params.operator.r0_nat
    # J(0, 1) = [[R - 1, 0], [-R, -rho]]; -R is off the diagonal, so the second
    # eigenvalue is -rho and not -R - rho
    eigenvalues = (r_nat - 1.0, -params.rho)
    return InfectionFreePoint(
        r0=r_nat,
        eigenvalues=eigenvalues,
        saddle=eigenvalues[0] > 0.0 > eigenvalues[1],
    )


def endemic_on_branch(branch: Branch, rho: float) -> tuple[float, float]:
    def h(I: float) -> float:
        return 1.0 / branch.value(I) - (1.0 - I / rho)

    lo, hi = 0.0, rho
    h_lo, h_hi = h(lo), h(hi)
    if h_lo == 0.0:
        return lo, 1.0 / branch.value(lo)
    if h_lo > 0.0 or h_hi < 0.0:
        raise RootBracketFailure(f"branch equilibrium not bracketed on [0, {rho}]: {h_lo}, {h_hi}")
    I_star = brentq(h, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    # S* = 1 - I*/rho agrees with 1/R(I*) except across a jump of an atomic branch
    return I_star, 1.0 - I_star / rho


def branch_endemic(
    params: SirParams,
    memory: MemoryCurve,
    direction: Optional[Direction] = None,
) -> tuple[float, float]:
    """Equilibrium (I*, S*) of the planar system frozen on the branch of memory.

    The branch is the full function R_r on [0, 1]; direction only records which
    side of the current value the trajectory is moving along.
    """
    return endemic_on_branch(params.branch(memory), params.rho)


def endemic_segment(params: SirParams, resolution: float = 1e-14) -> EndemicSegment:
    """Endpoints of the continuum of endemic equilibria.

    A point (I, 1 - I/rho) is an equilibrium for some attainable memory iff
    1/(1 - I/rho) lies between r_nat - delta*G(I, 1) and r_nat - delta*G(I, I).
    """
    op = params.operator
    G = op.density.corner_cumulative
    rho = params.rho
    delta = op.delta

    def phi(I: float) -> float:
        return 1.0 / (1.0 - I / rho)

    def lower_env(I: float) -> float:
        return phi(I) - (op.r0_nat - delta * G(I, 1.0))

    def upper_env(I: float) -> float:
        return phi(I) - (op.r0_nat - delta * G(I, I))

    top = rho * (1.0 - 1.0 / op.r0_nat)
    I_lo = _envelope_root(lower_env, top, resolution)
    I_hi = _envelope_root(upper_env, top, resolution)
    logger.info(f"endemic segment I in [{I_lo:.12g}, {I_hi:.12g}] (rho={rho}, delta={delta})")
    return EndemicSegment(I_lo=I_lo, I_hi=max(I_hi, I_lo), rho=rho)


def _envelope_root(fn, top: float, xtol: float) -> float:
    if fn(top) <= 0.0:
        return top
    return brentq(fn, 0.0, top, xtol=xtol, maxiter=500)


def classify_focus(R0: float, rho: float) -> EquilibriumType:
    if R0 <= 1.0:
        raise InvalidHypotheses(f"R0 must exceed 1, got {R0}")
    if rho * R0 * R0 < 4.0 * (R0 - 1.0):
        return EquilibriumType.FOCUS
    return EquilibriumType.NODE


def endemic_jacobian_eigenvalues(
    params: SirParams,
    memory: MemoryCurve,
    direction: Optional[Direction] = None,
) -> tuple[complex, complex]:
    """Spectrum of the frozen-branch Jacobian at its endemic point"""
    branch = params.branch(memory)
    I, S = endemic_on_branch(branch, params.rho)
    R = branch.value(I)
    h = 1e-7
    dR = (branch.value(min(I + h, 1.0)) - branch.value(max(I - h, 0.0))) / (
        min(I + h, 1.0) - max(I - h, 0.0)
    )
    J = np.array(
        [
            [R * S - 1.0 + dR * I * S, R * I],
            [-(R + dR * I) * S, -R * I - params.rho],
        ]
    )
    lam = np.linalg.eigvals(J)
    return complex(lam[0]), complex(lam[1])


# ============== INITIAL STATES ==============

def initial_state(I0: float, S0: float, memory: "MemoryCurve | list[float] | str" = "virgin") -> SirState:
    """SirState from a config-style memory spec: "virgin" or a list of extrema"""
    if isinstance(memory, MemoryCurve):
        curve = memory
    elif memory == "virgin":
        curve = virgin_rise(I0)
    else:
        curve = MemoryCurve(extrema=tuple(memory), current=I0)
    return SirState(I=I0, S=S0, memory=curve)


def random_initial_states(n: int, seed: int, floor: float = 1e-3) -> list[SirState]:
    """Seeded points of the open phase space, memory from a virgin rise to I0"""
    rng = np.random.default_rng(seed)
    states = []
    while len(states) < n:
        u, v = rng.uniform(floor, 1.0 - floor, size=2)
        if u + v > 1.0:
            u, v = 1.0 - u, 1.0 - v
        if u < floor or v < floor:
            continue
        states.append(initial_state(float(u), float(v)))
    return states


# ============== INTEGRATION ==============

def integrate(
    params: SirParams,
    initial: SirState,
    t_max: Optional[float] = None,
    cfg: Optional[IntegratorConfig] = None,
) -> Trajectory:
    """Integrate the switched system from initial up to t_max.

    Grazing (two switches closer than cfg.chatter_dt) triggers one retry with
    halved tolerances before the GrazingDetected error is raised.
    """
    cfg = cfg or IntegratorConfig()
    if t_max is not None:
        cfg = cfg.model_copy(update={"t_max": t_max})

    for attempt in Retrying(
        stop=stop_after_attempt(2),
        retry=retry_if_exception_type(GrazingDetected),
        before_sleep=before_sleep_log(logger, logging.WARNING),
        reraise=True,
    ):
        with attempt:
            scale = 0.5 ** (attempt.retry_state.attempt_number - 1)
            trajectory = _SwitchedIntegrator(params, cfg, scale).run(initial)
            trajectory.grazing_suspected = attempt.retry_state.attempt_number > 1
    logger.info(
        f"integration finished: outcome={trajectory.outcome.value} "
        f"switches={len(trajectory.records) - 1} t={trajectory.t[-1]:.6g}"
    )
    return trajectory


def _initial_direction(branch: Branch, rho: float, I: float, S: float) -> Optional[Direction]:
    g = branch.value(I) * S - 1.0
    if g > 0.0:
        return Direction.RISING
    if g < 0.0:
        return Direction.FALLING
    _, dS = field_on_branch(branch, rho, I, S)
    if dS > 0.0:
        return Direction.RISING
    if dS < 0.0:
        return Direction.FALLING
    return None


class _SwitchedIntegrator:
    """One integration attempt; segments are solved with RK45 on a frozen branch"""

    def __init__(self, params: SirParams, cfg: IntegratorConfig, scale: float):
        self.params = params
        self.cfg = cfg
        self.rho = params.rho
        self.rtol = cfg.rtol * scale
        self.atol = cfg.atol * scale
        self.atomic = isinstance(params.density, AtomicDensity)
        self.thresholds = params.density.thresholds() if self.atomic else []
        self.traj = Trajectory()
        self.maxima: list[tuple[float, float]] = []

    # ---- bookkeeping ----

    def _sample(self, t: float, I: float, S: float, branch: Branch, k: int, switch: bool) -> None:
        tr = self.traj
        tr.t.append(float(t))
        tr.I.append(float(I))
        tr.S.append(float(S))
        tr.R0.append(branch.value(I))
        tr.switch.append(switch)
        tr.branch.append(k)

    def _record(self, k, t, I, S, kind, direction, memory, branch) -> None:
        I_star, S_star = endemic_on_branch(branch, self.rho)
        self.traj.records.append(
            SwitchRecord(
                k=k, t=t, I=I, S=S, kind=kind, direction=direction,
                memory=memory, endemic_I=I_star, endemic_S=S_star,
            )
        )
        logger.debug(f"switch k={k} t={t:.10g} I={I:.10g} S={S:.10g} {kind.value} -> {direction.value}")

    # ---- events ----

    def _events(self, branch: Branch, direction: Direction, I0: float, watch_convergence: bool):
        rising = direction is Direction.RISING
        rho = self.rho

        def turn(t, y):
            return branch.value(y[0]) * y[1] - 1.0

        turn.terminal = True
        turn.direction = -1.0 if rising else 1.0
        events = [(turn, "turn")]

        if watch_convergence:
            def settle(t, y):
                dI, dS = field_on_branch(branch, rho, y[0], y[1])
                return math.hypot(dI, dS) - self.cfg.conv_tol

            settle.terminal = True
            settle.direction = -1.0
            events.append((settle, "converged"))

        target = self._next_threshold(I0, rising)
        if target is not None:
            def threshold(t, y):
                return y[0] - target

            threshold.terminal = True
            threshold.direction = 1.0 if rising else -1.0
            events.append((threshold, "threshold"))
        return events, target

    def _next_threshold(self, I: float, rising: bool) -> Optional[float]:
        if not self.thresholds:
            return None
        if rising:
            above = [a for a in self.thresholds if a > I]
            return above[0] if above else None
        below = [a for a in self.thresholds if a < I]
        return below[-1] if below else None

    def _solve(self, branch: Branch, direction: Direction, t0: float, I: float, S: float,
               watch_convergence: bool):
        events, target = self._events(branch, direction, I, watch_convergence)
        rho = self.rho

        def rhs(t, y):
            return field_on_branch(branch, rho, min(max(y[0], 0.0), 1.0), y[1])

        sol = solve_ivp(
            rhs,
            (t0, self.cfg.t_max),
            [I, S],
            method="RK45",
            rtol=self.rtol,
            atol=self.atol,
            max_step=self.cfg.max_step,
            events=[fn for fn, _ in events],
        )
        if sol.status == -1:
            raise StepFailure(f"step controller failed at t={sol.t[-1]}: {sol.message}")
        if not np.all(np.isfinite(sol.y)):
            raise NonFiniteState(f"non-finite state near t={sol.t[-1]}")

        kind = "end"
        if sol.status == 1:
            fired = [
                (sol.t_events[i][0], name)
                for i, (_, name) in enumerate(events)
                if len(sol.t_events[i])
            ]
            kind = min(fired)[1]
            # an atomic branch jumps at the threshold, which also flips the sign of turn()
            if kind == "turn" and target is not None and abs(sol.y[0][-1] - target) <= self.cfg.event_tol:
                kind = "threshold"
        return sol, kind, target

    # ---- acceptance tests ----

    def _settled(self, branch: Branch, I: float, S: float) -> bool:
        from hystsir.lyapunov import BranchLyapunov, switch_point_value

        records = self.traj.records
        if len(records) < 2:
            return True
        v_prev, v_last = (switch_point_value(self.params, r) for r in records[-2:])
        if abs(v_last - v_prev) < SETTLED_TOL:
            return True
        # finitely many switches: the trajectory sits at the current branch equilibrium
        return BranchLyapunov(self.params, records[-1].memory).V(I, S) < SETTLED_TOL

    def _orbit_closed(self, I: float, S: float) -> bool:
        """Return map on the switching section.

        A closed loop crosses the switch set once per turn from rising to falling, so
        successive returns to that part of the section agree iff the loop has closed.
        """
        self.maxima.append((I, S))
        n = self.cfg.orbit_returns
        if len(self.maxima) < n + 1:
            return False
        recent = self.maxima[-(n + 1):]
        gaps = [math.hypot(a[0] - b[0], a[1] - b[1]) for a, b in zip(recent, recent[1:])]
        minima = [r.I for r in self.traj.records if r.direction is Direction.RISING]
        amplitude = I - minima[-1] if minima else I
        return max(gaps) < self.cfg.orbit_tol and amplitude > ORBIT_MIN_AMPLITUDE

    # ---- main loop ----

    def run(self, initial: SirState) -> Trajectory:
        cfg = self.cfg
        tr = self.traj
        t, I, S = 0.0, initial.I, initial.S
        memory = initial.memory
        branch = self.params.branch(memory)
        direction = _initial_direction(branch, self.rho, I, S)
        k = 0
        self._sample(t, I, S, branch, k, switch=True)
        if direction is None:
            self._record(k, t, I, S, SwitchKind.START, Direction.RISING, memory, branch)
            tr.outcome = Outcome.EQUILIBRIUM
            tr.final_memory = memory
            return tr
        self._record(k, t, I, S, SwitchKind.START, direction, memory, branch)

        watch = True
        last_switch = t
        while t < cfg.t_max:
            if watch and math.hypot(*field_on_branch(branch, self.rho, I, S)) < cfg.conv_tol:
                if self._settled(branch, I, S):
                    tr.outcome = Outcome.EQUILIBRIUM
                    break
                watch = False
            sol, kind, target = self._solve(branch, direction, t, I, S, watch)
            for ti, Ii, Si in zip(sol.t[1:], sol.y[0][1:], sol.y[1][1:]):
                self._sample(ti, Ii, Si, branch, k, switch=False)
            t, I, S = float(sol.t[-1]), float(sol.y[0][-1]), float(sol.y[1][-1])

            if kind == "end":
                break
            if kind == "converged":
                if self._settled(branch, I, S):
                    tr.outcome = Outcome.EQUILIBRIUM
                    break
                watch = False
                continue

            previous = direction
            if kind == "threshold":
                I = target
                tr.I[-1] = I
                memory = advance_memory(memory, I)
                branch = self.params.branch(memory)
                tr.R0[-1] = branch.value(I)
                g = branch.value(I) * S - 1.0
                rising = direction is Direction.RISING
                if (rising and g >= 0.0) or (not rising and g <= 0.0):
                    continue
                switch_kind = SwitchKind.THRESHOLD
            else:
                I = min(max(I, 0.0), 1.0)
                memory = advance_memory(memory, I)
                branch = self.params.branch(memory)
                switch_kind = SwitchKind.TURN

            if t - last_switch < cfg.chatter_dt:
                raise GrazingDetected(
                    f"switches at t={last_switch:.12g} and t={t:.12g} closer than {cfg.chatter_dt}"
                )
            last_switch = t
            direction = previous.flipped
            k += 1
            tr.switch[-1] = True
            self._record(k, t, I, S, switch_kind, direction, memory, branch)
            watch = True

            if previous is Direction.RISING and self._orbit_closed(I, S):
                tr.outcome = Outcome.ORBIT
                tr.orbit_detected = True
                break
            if k >= cfg.max_switches:
                logger.warning(f"stopping after {k} switches at t={t:.6g}")
                break

        tr.final_memory = memory
        return tr


# ============== EXPORT ==============

def trajectory_to_csv(trajectory: Trajectory, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "I", "S", "R0", "switch"])
        for row in zip(trajectory.t, trajectory.I, trajectory.S, trajectory.R0, trajectory.switch):
            t, I, S, R0, switch = row
            writer.writerow([repr(t), repr(I), repr(S), repr(R0), int(switch)])
    return path

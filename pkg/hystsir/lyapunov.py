"""HystSIR - Lyapunov functions of frozen branches and the descent bounds along trajectories

For the branch of memory r with endemic point (I*, S*) and f(I) = I R_r(I),

    V(I, S) = int_{I*}^{I} (1 - f*/f(i)) di + int_{S*}^{S} (1 - S*/s) ds

Every check returns a LemmaReport; violated inequalities are recorded, never raised.
"""
import logging
import math
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from hystsir.certify import compute_certificate
from hystsir.dynamics import SirParams, endemic_on_branch, field_on_branch
from hystsir.errors import ContractViolation, RootBracketFailure
from hystsir.preisach import epsilon0, lipschitz_q0
from hystsir.state import (
    Direction,
    LemmaRecord,
    LemmaReport,
    MemoryCurve,
    StabilityCertificate,
    SwitchRecord,
    Trajectory,
)

logger = logging.getLogger(__name__)

# Slack on every printed inequality
LEMMA_SLACK = 1e-8
QUAD_TOL = 1e-12
# Lower end of the bracket for S_m
S_FLOOR = 1e-14
JUMP_AGREEMENT = 1e-10
DRIFT_IDENTITY = 1e-12


def _quad(fn: Callable[[float], float], a: float, b: float, kinks: Sequence[float]) -> float:
    if a == b:
        return 0.0
    if a > b:
        return -_quad(fn, b, a, kinks)
    inner = [p for p in kinks if a < p < b]
    value, _ = quad(fn, a, b, points=inner or None, epsabs=QUAD_TOL, epsrel=QUAD_TOL, limit=200)
    return value


def _times(*factors: float) -> float:
    """Product that is 0 as soon as one factor is 0, even next to an infinite one"""
    if any(f == 0.0 for f in factors):
        return 0.0
    return math.prod(factors)


def _row(lemma: str, k: int, lhs: float, rhs: float, detail: str = "",
         informational: bool = False) -> LemmaRecord:
    margin = rhs - lhs
    if math.isnan(margin) and lhs == rhs:
        margin = 0.0
    return LemmaRecord(
        lemma=lemma,
        k=k,
        lhs=lhs,
        rhs=rhs,
        margin=margin,
        passed=bool(margin >= -LEMMA_SLACK),
        detail=detail,
        informational=informational,
    )


# ============== LYAPUNOV FUNCTION ==============

class BranchLyapunov:
    """V for the planar system frozen on the branch of one memory curve"""

    def __init__(self, params: SirParams, memory: MemoryCurve, direction: Optional[Direction] = None):
        self.params = params
        self.rho = params.rho
        self.memory = memory
        self.direction = direction
        self.branch = params.branch(memory)
        self.I_star, self.S_star = endemic_on_branch(self.branch, self.rho)
        self.f_star = self.branch.f(self.I_star)
        self.kinks = self.branch.breakpoints()
        self._from_star: dict[float, float] = {}

    def inverse_f_integral(self, a: float, b: float) -> float:
        """int_a^b di / f(i)"""
        return _quad(lambda i: 1.0 / self.branch.f(i), a, b, self.kinks)

    def i_part(self, I: float) -> float:
        if I not in self._from_star:
            self._from_star[I] = self.inverse_f_integral(self.I_star, I)
        return (I - self.I_star) - self.f_star * self._from_star[I]

    def s_part(self, S: float) -> float:
        return S - self.S_star - self.S_star * math.log(S / self.S_star)

    def V(self, I: float, S: float) -> float:
        if I <= 0.0 or S <= 0.0:
            raise ContractViolation(f"V needs I, S > 0, got I={I}, S={S}")
        return self.i_part(I) + self.s_part(S)

    # ---- partial derivatives ----

    def V_I(self, I: float) -> float:
        return 1.0 - self.f_star / self.branch.f(I)

    def V_S(self, S: float) -> float:
        return 1.0 - self.S_star / S

    def V_II(self, I: float) -> float:
        f = self.branch.f(I)
        return self.branch.slope(I) * self.f_star / (f * f)

    def V_SS(self, S: float) -> float:
        return self.S_star / (S * S)

    def curvature(self, I: float, S: float) -> float:
        """Signed curvature of the level line through (I, S); V_IS vanishes identically"""
        vi, vs = self.V_I(I), self.V_S(S)
        norm = (vi * vi + vs * vs) ** 1.5
        return -(self.V_SS(S) * vi * vi + self.V_II(I) * vs * vs) / norm

    def V_dot(self, I: float, S: float) -> float:
        dI, dS = field_on_branch(self.branch, self.rho, I, S)
        return self.V_I(I) * dI + self.V_S(S) * dS

    def V_dot_bound(self, S: float) -> float:
        return -self.rho * (S - self.S_star) ** 2 / (S * self.S_star)

    def along(self, I: Sequence[float], S: Sequence[float]) -> np.ndarray:
        """V on consecutive samples, the I-part accumulated over short steps"""
        I = np.asarray(I, dtype=float)
        S = np.asarray(S, dtype=float)
        if I.size == 0:
            return np.zeros(0)
        i_part = np.empty(I.size)
        i_part[0] = self.i_part(float(I[0]))
        for n in range(1, I.size):
            a, b = float(I[n - 1]), float(I[n])
            i_part[n] = i_part[n - 1] + (b - a) - self.f_star * self.inverse_f_integral(a, b)
        s_part = S - self.S_star - self.S_star * np.log(S / self.S_star)
        return i_part + s_part

    # ---- level lines ----

    def level_extremum(self, level: float, upper: bool) -> float:
        """Root of s_part(S) = level above S* (S_M) or below it (S_m)"""
        if level < 0.0:
            raise ContractViolation(f"level must be non-negative, got {level}")
        if level == 0.0:
            return self.S_star

        def g(S: float) -> float:
            return self.s_part(S) - level

        if upper:
            lo, hi = self.S_star, max(1.0, 2.0 * self.S_star)
            for _ in range(64):
                if g(hi) >= 0.0:
                    break
                hi *= 2.0
            else:
                raise RootBracketFailure(f"S_M not bracketed for level {level}")
        else:
            lo, hi = S_FLOOR, self.S_star
            if g(lo) < 0.0:
                raise RootBracketFailure(f"S_m below {S_FLOOR} for level {level}")
        return brentq(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)

    def level_point(self, c: float, theta: float) -> Optional[tuple[float, float]]:
        """Point of the level line V = c on the ray from (I*, S*) at angle theta"""
        dx, dy = math.cos(theta), math.sin(theta)
        limits = []
        if dx > 0.0:
            limits.append((1.0 - self.I_star) / dx)
        elif dx < 0.0:
            limits.append(self.I_star / -dx * (1.0 - 1e-12))
        if dy < 0.0:
            limits.append(self.S_star / -dy * (1.0 - 1e-12))
        r_max = min(limits) if limits else 50.0
        r_max = min(r_max, 50.0)

        def h(r: float) -> float:
            return self.V(self.I_star + r * dx, self.S_star + r * dy) - c

        if h(r_max) < 0.0:
            return None
        r = brentq(h, 0.0, r_max, xtol=1e-14, maxiter=500)
        return self.I_star + r * dx, self.S_star + r * dy


def switch_point_value(params: SirParams, record: SwitchRecord) -> float:
    """v_k = V_k(I_k, S_k)"""
    return BranchLyapunov(params, record.memory, record.direction).V(record.I, record.S)


# ============== PER-BRANCH SAMPLES ==============

class BranchProfile(NamedTuple):
    k: int
    lyap: BranchLyapunov
    t: np.ndarray
    I: np.ndarray
    S: np.ndarray
    V: np.ndarray


def branch_profiles(params: SirParams, trajectory: Trajectory) -> list[BranchProfile]:
    t = np.asarray(trajectory.t)
    I = np.asarray(trajectory.I)
    S = np.asarray(trajectory.S)
    profiles = []
    for record in trajectory.records:
        sl = trajectory.segment_slice(record.k)
        if sl.stop - sl.start < 1:
            continue
        lyap = BranchLyapunov(params, record.memory, record.direction)
        profiles.append(BranchProfile(record.k, lyap, t[sl], I[sl], S[sl], lyap.along(I[sl], S[sl])))
    return profiles


class SwitchPair(NamedTuple):
    """Branch k between its switching moments t_k and t_{k+1}, and the branch k+1"""
    k: int
    direction: Direction
    before: SwitchRecord
    after: SwitchRecord
    lyap: BranchLyapunov
    lyap_next: BranchLyapunov

    @property
    def rising(self) -> bool:
        return self.direction is Direction.RISING


def switch_pairs(params: SirParams, trajectory: Trajectory, start: int = 1) -> list[SwitchPair]:
    records = trajectory.records
    lyaps = {}

    def lyap(r: SwitchRecord) -> BranchLyapunov:
        if r.k not in lyaps:
            lyaps[r.k] = BranchLyapunov(params, r.memory, r.direction)
        return lyaps[r.k]

    return [
        SwitchPair(k, records[k].direction, records[k], records[k + 1], lyap(records[k]), lyap(records[k + 1]))
        for k in range(start, len(records) - 1)
    ]


# ============== FLOW CHECKS ==============

def V_dot_bound_check(
    params: SirParams,
    trajectory: Trajectory,
    profiles: Optional[list[BranchProfile]] = None,
) -> LemmaReport:
    """Worst sample per branch of V_dot <= -rho (S - S*)^2 / (S S*)"""
    report = LemmaReport()
    for prof in profiles if profiles is not None else branch_profiles(params, trajectory):
        excess = [prof.lyap.V_dot(i, s) - prof.lyap.V_dot_bound(s) for i, s in zip(prof.I, prof.S)]
        n = int(np.argmax(excess))
        S = float(prof.S[n])
        report.records.append(
            _row("v_dot_bound", prof.k, prof.lyap.V_dot(float(prof.I[n]), S),
                 prof.lyap.V_dot_bound(S), detail=f"t={prof.t[n]:.10g}")
        )
    return report


def monotonicity_check(
    params: SirParams,
    trajectory: Trajectory,
    profiles: Optional[list[BranchProfile]] = None,
) -> LemmaReport:
    """V_k does not increase between consecutive samples of branch k"""
    report = LemmaReport()
    for prof in profiles if profiles is not None else branch_profiles(params, trajectory):
        if prof.V.size < 2:
            continue
        steps = np.diff(prof.V)
        n = int(np.argmax(steps))
        report.records.append(
            _row("lyapunov_monotone", prof.k, float(steps[n]), 0.0, detail=f"t={prof.t[n + 1]:.10g}")
        )
    return report


def level_set_convexity_check(lyap: BranchLyapunov, c: float, n_points: int = 64) -> LemmaRecord:
    """Curvature of the level line V = c has one sign (the sublevel set is convex)"""
    if c <= 0.0:
        raise ContractViolation(f"level must be positive, got {c}")
    worst = -math.inf
    seen = 0
    for theta in np.linspace(0.0, 2.0 * math.pi, n_points, endpoint=False):
        point = lyap.level_point(c, float(theta))
        if point is None:
            continue
        seen += 1
        worst = max(worst, lyap.curvature(*point))
    if not seen:
        return _row("level_set_convexity", -1, 0.0, 0.0, detail=f"level {c} leaves the domain")
    return _row("level_set_convexity", -1, worst, 0.0, detail=f"c={c:.6g} points={seen}")


def branch_slope_check(params: SirParams, trajectory: Trajectory, n_pairs: int = 200) -> LemmaReport:
    """Difference quotients of f_k stay above eps0 when eps0 > 0"""
    report = LemmaReport()
    eps0 = epsilon0(params.operator)
    if eps0 <= 0.0:
        return report
    grid = np.linspace(1e-3, 1.0, n_pairs + 1)
    for record in trajectory.records:
        branch = params.branch(record.memory)
        f = np.array([branch.f(float(x)) for x in grid])
        quotients = np.diff(f) / np.diff(grid)
        report.records.append(_row("branch_slope", record.k, eps0, float(quotients.min())))
    return report


def lower_bound_check(trajectory: Trajectory, certificate: StabilityCertificate) -> LemmaReport:
    """I >= i0 and S >= s0 from the second switching moment on"""
    report = LemmaReport()
    if len(trajectory.records) < 3:
        return report
    t2 = trajectory.records[2].t
    t = np.asarray(trajectory.t)
    late = t >= t2
    report.records.append(
        _row("lower_bound_i0", 2, certificate.i0, float(np.asarray(trajectory.I)[late].min()))
    )
    report.records.append(
        _row("lower_bound_s0", 2, certificate.s0, float(np.asarray(trajectory.S)[late].min()))
    )
    return report


def sandwich_check(
    params: SirParams,
    trajectory: Trajectory,
    certificate: StabilityCertificate,
    profiles: Optional[list[BranchProfile]] = None,
) -> LemmaReport:
    """Quadratic bounds of V_k on the samples after the second switching moment"""
    report = LemmaReport()
    if len(trajectory.records) < 3:
        return report
    op = params.operator
    t2 = trajectory.records[2].t
    i0, s0 = certificate.i0, certificate.s0
    for prof in profiles if profiles is not None else branch_profiles(params, trajectory):
        late = prof.t >= t2
        if not late.any():
            continue
        dI2 = (prof.I[late] - prof.lyap.I_star) ** 2
        dS2 = (prof.S[late] - prof.lyap.S_star) ** 2
        V = prof.V[late]
        lower = max(certificate.eps0, 0.0) * dI2 / (2.0 * op.r0_nat) + dS2 / 2.0
        upper = op.r0_nat * dI2 / (2.0 * i0 * op.r0_int) + dS2 / (2.0 * s0)
        report.records.append(_row("sandwich_lower", prof.k, float(np.max(lower - V)), 0.0))
        report.records.append(_row("sandwich_upper", prof.k, float(np.max(V - upper)), 0.0))
    return report


# ============== SWITCH CHECKS ==============

def descent_increment_check(params: SirParams, pair: SwitchPair) -> LemmaReport:
    """Decrease of V_k from the k-th to the (k+1)-th switching point.

    Rising:  dV <= -(rho/4) (I_{k+1} - I*) sqrt(S_M int_{I*}^{I_{k+1}} (1 - f*/f) di)
    Falling: dV <= -(rho/4) (I* - I_{k+1}) sqrt(S_m int_{I_{k+1}}^{I*} (f*/f - 1) di)
    """
    lyap = pair.lyap
    I1, S1 = pair.after.I, pair.after.S
    level = lyap.V(I1, S1)
    dV = level - lyap.V(pair.before.I, pair.before.S)
    S_ext = lyap.level_extremum(level, upper=pair.rising)
    # both integrals equal the I-part of V_k at I_{k+1}
    area = max(lyap.i_part(I1), 0.0)
    gap = I1 - lyap.I_star if pair.rising else lyap.I_star - I1
    bound = -(params.rho / 4.0) * gap * math.sqrt(S_ext * area)
    name = "descent_increment_rising" if pair.rising else "descent_increment_falling"
    return LemmaReport(records=[_row(name, pair.k, dV, bound, detail=f"S_ext={S_ext:.12g}")])


def _branch_values(pair: SwitchPair) -> dict[str, float]:
    lyap, nxt = pair.lyap, pair.lyap_next
    return {
        "R_k": lyap.branch.value(lyap.I_star),
        "R_next": nxt.branch.value(nxt.I_star),
        "R_next_at_k": nxt.branch.value(lyap.I_star),
        "f_k": lyap.f_star,
        "f_k_switch": lyap.branch.f(pair.after.I),
    }


def equilibrium_drift_check(params: SirParams, pair: SwitchPair) -> LemmaReport:
    rho = params.rho
    q0 = lipschitz_q0(params.operator)
    lyap, nxt = pair.lyap, pair.lyap_next
    v = _branch_values(pair)
    I1 = pair.after.I
    # S* recovered from R(I*) S* = 1, not from the line the root was found on
    s_k = 1.0 / v["R_k"]
    s_next = 1.0 / v["R_next"]
    if pair.rising:
        drift = lyap.I_star - nxt.I_star
        identity = rho * (s_next - s_k)
        gap = I1 - lyap.I_star
    else:
        drift = nxt.I_star - lyap.I_star
        identity = rho * (s_k - s_next)
        gap = lyap.I_star - I1
    on_line = max(abs(s_k + lyap.I_star / rho - 1.0), abs(s_next + nxt.I_star / rho - 1.0))
    bound = _times(rho, q0, gap) / (v["R_next"] * v["R_k"])
    return LemmaReport(records=[
        _row("equilibrium_drift_sign", pair.k, 0.0, drift),
        _row("equilibrium_drift_bound", pair.k, drift, bound),
        _row("equilibrium_drift_identity", pair.k, abs(drift - identity), DRIFT_IDENTITY),
        _row("equilibrium_on_line", pair.k, on_line, DRIFT_IDENTITY),
    ])


def branch_jump_decomposition(pair: SwitchPair) -> float:
    """V_{k+1} - V_k at the switching point, assembled from its S and I differences"""
    lyap, nxt = pair.lyap, pair.lyap_next
    I1, S1 = pair.after.I, pair.after.S
    c, c_next = lyap.S_star, nxt.S_star
    delta_S = -((c_next - c) - c * math.log(c_next / c)) - (c_next - c) * math.log(S1 / c_next)

    kinks = sorted({*lyap.kinks, *nxt.kinks})
    f_k, f_next = lyap.branch.f, nxt.branch.f
    fs_k, fs_next = lyap.f_star, nxt.f_star
    delta_I = (
        -_quad(lambda i: fs_next / f_next(i) - fs_next / f_k(i), lyap.I_star, I1, kinks)
        - _quad(lambda i: (fs_next - fs_k) / f_k(i), lyap.I_star, I1, kinks)
        - _quad(lambda i: 1.0 - fs_next / f_next(i), lyap.I_star, nxt.I_star, kinks)
    )
    return delta_S + delta_I


def branch_jump_check(params: SirParams, pair: SwitchPair) -> LemmaReport:
    rho = params.rho
    q0 = lipschitz_q0(params.operator)
    I1, S1 = pair.after.I, pair.after.S
    jump = pair.lyap_next.V(I1, S1) - pair.lyap.V(I1, S1)
    v = _branch_values(pair)
    I_star = pair.lyap.I_star

    if pair.rising:
        gap2 = (I1 - I_star) ** 2
        factor = rho * rho * q0 / (v["R_next"] ** 2 * v["f_k"]) + rho / v["f_k"] + 1.0
        bound = _times(q0, gap2, factor) / v["R_k"]
        name = "branch_jump_rising"
    else:
        gap2 = (I_star - I1) ** 2
        factor = (
            rho * rho * q0 / (v["R_next"] ** 2 * v["R_k"] ** 2 * I_star)
            + rho * v["R_next_at_k"] / (v["R_next"] * v["R_k"] * v["f_k_switch"])
            + I_star / v["f_k_switch"]
        )
        bound = _times(q0, gap2, factor)
        name = "branch_jump_falling"

    agreement = abs(jump - branch_jump_decomposition(pair))
    return LemmaReport(records=[
        _row(name, pair.k, jump, bound),
        _row("branch_jump_consistency", pair.k, agreement, JUMP_AGREEMENT),
    ])


def combined_descent_check(params: SirParams, pair: SwitchPair) -> LemmaReport:
    """v_{k+1} - v_k <= -Q (I_{k+1} - I*^k)^2 with Q_k (rising) or its falling counterpart"""
    rho = params.rho
    op = params.operator
    q0 = lipschitz_q0(op)
    eps0 = max(epsilon0(op), 0.0)
    lyap = pair.lyap
    I1, S1 = pair.after.I, pair.after.S
    lhs = pair.lyap_next.V(I1, S1) - lyap.V(pair.before.I, pair.before.S)
    S_ext = lyap.level_extremum(lyap.V(I1, S1), upper=pair.rising)
    v = _branch_values(pair)
    I_star = lyap.I_star

    if pair.rising:
        descent = (rho / 4.0) * math.sqrt(eps0 * S_ext / (2.0 * v["f_k_switch"]))
        factor = rho * rho * q0 / (v["R_next"] ** 2 * v["f_k"]) + rho / v["f_k"] + 1.0
        penalty = _times(q0, factor) / v["R_k"]
        name = "combined_descent_rising"
    else:
        descent = (rho / 4.0) * math.sqrt(eps0 * S_ext / (2.0 * v["f_k"]))
        factor = (
            rho * rho * q0 / (v["R_next"] ** 2 * v["R_k"] ** 2 * I_star)
            + rho * v["R_next_at_k"] / (v["R_next"] * v["R_k"] * v["f_k_switch"])
            + I_star / v["f_k_switch"]
        )
        penalty = _times(q0, factor)
        name = "combined_descent_falling"

    Q = descent - penalty
    rhs = -_times(Q, (I1 - I_star) ** 2)
    return LemmaReport(records=[_row(name, pair.k, lhs, rhs, detail=f"Q={Q:.6e}")])


def geometric_decay_check(
    params: SirParams,
    trajectory: Trajectory,
    certificate: StabilityCertificate,
) -> LemmaReport:
    """v_{n+2} <= v_2 p^n once the certificate holds.

    Trajectories with fewer than three switching moments pass vacuously.
    """
    report = LemmaReport()
    records = trajectory.records
    values = [switch_point_value(params, r) for r in records]
    for k in range(1, len(values) - 1):
        report.records.append(
            _row("switch_value_monotone", k + 1, values[k + 1], values[k], informational=True)
        )
    if certificate.p is None or len(records) < 3:
        logger.debug(f"geometric decay not checked: p={certificate.p} switches={len(records) - 1}")
        return report
    v0 = values[2]
    for n, v in enumerate(values[2:]):
        report.records.append(_row("geometric_decay", n + 2, v, v0 * certificate.p**n))
    return report


# ============== FULL REPORT ==============

def verify_lemmas(
    params: SirParams,
    trajectory: Trajectory,
    certificate: Optional[StabilityCertificate] = None,
    convexity_branches: int = 3,
    convexity_points: int = 24,
) -> LemmaReport:
    """Every descent inequality along one trajectory, switch checks from k = 1 on"""
    if certificate is None:
        certificate = compute_certificate(params)

    profiles = branch_profiles(params, trajectory)
    report = LemmaReport()
    report.extend(V_dot_bound_check(params, trajectory, profiles))
    report.extend(monotonicity_check(params, trajectory, profiles))
    report.extend(branch_slope_check(params, trajectory))
    report.extend(lower_bound_check(trajectory, certificate))
    report.extend(sandwich_check(params, trajectory, certificate, profiles))

    for pair in switch_pairs(params, trajectory):
        report.extend(descent_increment_check(params, pair))
        report.extend(equilibrium_drift_check(params, pair))
        report.extend(branch_jump_check(params, pair))
        report.extend(combined_descent_check(params, pair))

    for record in trajectory.records[1:1 + convexity_branches]:
        lyap = BranchLyapunov(params, record.memory, record.direction)
        c = lyap.V(record.I, record.S)
        if c > 0.0:
            row = level_set_convexity_check(lyap, c, convexity_points)
            report.records.append(row.model_copy(update={"k": record.k}))

    report.extend(geometric_decay_check(params, trajectory, certificate))
    failures = report.failures
    logger.info(f"lemma report: {len(report.records)} rows, {len(failures)} failures")
    for row in failures:
        logger.debug(f"failed {row.lemma} k={row.k}: lhs={row.lhs:.6e} rhs={row.rhs:.6e}")
    return report

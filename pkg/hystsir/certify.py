"""HystSIR - Global stability certificate

All constants are evaluated with mpmath because i0 is exponentially small and
sits in the denominators of kappa, a and b.
"""
import logging
import math
from typing import NamedTuple, Optional

import mpmath

from hystsir.dynamics import SirParams
from hystsir.errors import InvalidHypotheses, NoCertifiedInterval
from hystsir.state import StabilityCertificate, Verdict

logger = logging.getLogger(__name__)

PRECISION_DPS = 50
# Halvings of delta tried before giving up on a certified interval
MAX_HALVINGS = 4000


class CertificateConstants(NamedTuple):
    q0: mpmath.mpf
    eps0: mpmath.mpf
    s0: mpmath.mpf
    i0: mpmath.mpf
    kappa: mpmath.mpf
    a: mpmath.mpf
    b: mpmath.mpf


def _q0(delta, sup_q):
    if delta == 0:
        return mpmath.mpf(0)
    if math.isinf(sup_q):
        return mpmath.inf
    return delta * mpmath.mpf(sup_q)


def certificate_constants(r0_nat, r0_int, rho, sup_q: float) -> CertificateConstants:
    """Closed forms of q0, eps0, s0, i0, kappa, a, b at the current mpmath precision.

    r0_nat, r0_int and rho may be floats or mpf values; r0_int must exceed 1.
    """
    Rn = mpmath.mpf(r0_nat)
    Ri = mpmath.mpf(r0_int)
    rho = mpmath.mpf(rho)
    if Ri <= 1:
        raise InvalidHypotheses(f"r0_int must exceed 1, got {r0_int}")
    if Rn < Ri:
        raise InvalidHypotheses(f"r0_nat ({r0_nat}) must not be below r0_int ({r0_int})")

    q0 = _q0(Rn - Ri, sup_q)
    eps0 = Ri - q0
    s0 = mpmath.exp(-(1 + 2 * Rn)) / Rn
    i0 = rho * ((Ri - 1) / Ri) * mpmath.exp(-(2 / (rho * (Ri - 1)) + 1 / Ri) * Rn)

    # sqrt of a non-positive eps0 is taken as 0; such parameters are never certified
    descent = (rho / 4) * mpmath.sqrt(max(eps0, 0) * s0 / (2 * Rn))
    if q0 == 0:
        kappa = descent
        a = Rn / (2 * i0 * Ri)
        b = mpmath.mpf(0)
    elif mpmath.isinf(q0):
        kappa = -mpmath.inf
        a = b = mpmath.inf
    else:
        kappa = descent - (q0 / (i0 * Ri)) * (rho**2 * q0 / Ri**3 + rho * Rn / Ri**2 + 1)
        a = Rn / (2 * i0 * Ri) + q0 / (2 * s0 * Ri**2)
        b = (q0 / Ri) * (rho**2 * q0 / (i0 * Ri**3) + rho / (i0 * Ri) + 1)
    return CertificateConstants(q0=q0, eps0=eps0, s0=s0, i0=i0, kappa=kappa, a=a, b=b)


def kappa_at(r0_nat: float, delta, rho: float, sup_q: float) -> mpmath.mpf:
    """kappa with r0_int = r0_nat - delta; -inf once r0_int reaches 1"""
    with mpmath.workdps(PRECISION_DPS):
        r0_int = mpmath.mpf(r0_nat) - mpmath.mpf(delta)
        if r0_int <= 1:
            return -mpmath.inf
        return certificate_constants(r0_nat, r0_int, rho, sup_q).kappa


def delta_threshold(r0_nat: float, rho: float, density, tol: float = 1e-10) -> float:
    """Largest delta in (0, r0_nat - 1) with kappa > 0, to relative tolerance tol.

    delta* can be many orders of magnitude below 1 (i0 decays like
    exp(-2 r0_nat / (rho (r0_int - 1)))), so the certified end is first located
    by halving and then refined by bisection.
    """
    if r0_nat <= 1.0:
        raise InvalidHypotheses(f"r0_nat must exceed 1, got {r0_nat}")
    if not (0.0 < rho < 1.0):
        raise InvalidHypotheses(f"rho must lie in (0, 1), got {rho}")
    sup_q = density.sup_q
    if math.isinf(sup_q):
        raise NoCertifiedInterval("density is unbounded, q0 is infinite for every delta > 0")

    with mpmath.workdps(PRECISION_DPS):
        hi = mpmath.mpf(r0_nat) - 1
        lo = hi
        for _ in range(MAX_HALVINGS):
            lo = lo / 2
            if kappa_at(r0_nat, lo, rho, sup_q) > 0:
                break
            hi = lo
        else:
            raise NoCertifiedInterval(
                f"kappa <= 0 down to delta={mpmath.nstr(lo, 5)} (r0_nat={r0_nat}, rho={rho})"
            )

        while hi - lo > tol * lo:
            mid = (lo + hi) / 2
            if kappa_at(r0_nat, mid, rho, sup_q) > 0:
                lo = mid
            else:
                hi = mid
        delta_star = float(lo)
    logger.debug(f"delta* = {delta_star:.6e} for r0_nat={r0_nat} rho={rho}")
    return delta_star


def _to_float(x) -> float:
    return float(x) if not mpmath.isinf(x) else (math.inf if x > 0 else -math.inf)


def compute_certificate(params: SirParams, delta_tol: float = 1e-10) -> StabilityCertificate:
    op = params.operator
    density = params.density
    sup_q = density.sup_q

    with mpmath.workdps(PRECISION_DPS):
        c = certificate_constants(op.r0_nat, op.r0_int, params.rho, sup_q)
        certified = c.eps0 > 0 and c.kappa > 0
        p: Optional[float] = None
        if c.kappa > 0:
            p = float((c.a + c.b) / (c.a + c.b + c.kappa))

    try:
        delta_star = delta_threshold(op.r0_nat, params.rho, density, tol=delta_tol)
    except NoCertifiedInterval as e:
        logger.warning(f"no certified delta interval: {e}")
        delta_star = 0.0

    within = density.strictly_positive and math.isfinite(sup_q)
    cert = StabilityCertificate(
        q0=_to_float(c.q0),
        eps0=_to_float(c.eps0),
        i0=_to_float(c.i0),
        s0=_to_float(c.s0),
        kappa=_to_float(c.kappa),
        a=_to_float(c.a),
        b=_to_float(c.b),
        p=p,
        verdict=Verdict.CERTIFIED if certified else Verdict.NOT_CERTIFIED,
        delta_star=delta_star,
        within_hypotheses=within,
        inputs={
            "r0_nat": op.r0_nat,
            "r0_int": op.r0_int,
            "rho": params.rho,
            "density": density.kind,
            "sup_q": sup_q,
        },
    )
    logger.info(
        f"certificate: verdict={cert.verdict.value} kappa={cert.kappa:.6e} "
        f"eps0={cert.eps0:.6g} delta*={delta_star:.6e}"
    )
    return cert

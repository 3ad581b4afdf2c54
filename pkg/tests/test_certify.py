"""
Test: stability certificate and the certified hysteresis range.
"""
import json
import math

import mpmath
import pytest

from conftest import make_params
from hystsir.certify import compute_certificate, delta_threshold, kappa_at
from hystsir.density import UniformDensity
from hystsir.dynamics import integrate, random_initial_states
from hystsir.errors import InvalidHypotheses, NoCertifiedInterval
from hystsir.lyapunov import geometric_decay_check
from hystsir.state import Verdict

REL_TOL = 1e-12


def reference_constants(r0_nat: float, r0_int: float, rho: float, sup_q: float) -> dict:
    """The closed forms written out directly at 50 digits, from the exact binary inputs"""
    with mpmath.workdps(50):
        Rn, Ri, p, q = (mpmath.mpf(x) for x in (r0_nat, r0_int, rho, sup_q))
        q0 = (Rn - Ri) * q
        eps0 = Ri - q0
        s0 = mpmath.exp(-1 - 2 * Rn) / Rn
        i0 = p * (Ri - 1) / Ri * mpmath.exp(-Rn * (2 / (p * (Ri - 1)) + 1 / Ri))
        first = p / 4 * mpmath.sqrt(eps0 * s0 / (2 * Rn))
        second = q0 / (i0 * Ri) * (p**2 * q0 / Ri**3 + p * Rn / Ri**2 + 1)
        return {"q0": q0, "eps0": eps0, "s0": s0, "i0": i0, "kappa": first - second}


def assert_rel(value: float, reference, tol: float = REL_TOL) -> None:
    ref = float(reference)
    assert abs(value - ref) <= tol * abs(ref), f"{value} != {ref}"


@pytest.mark.parametrize("r0_nat,r0_int,rho", [
    (2.0, 1.8, 0.5),
    (1.8, 1.7, 0.5),
    (3.0, 2.99999, 0.5),
    (2.0, 1.9999999, 0.1),
])
def test_closed_forms_against_reference(r0_nat, r0_int, rho):
    cert = compute_certificate(make_params(r0_nat, r0_int, rho))
    ref = reference_constants(r0_nat, r0_int, rho, 2.0)
    for name in ("q0", "eps0", "s0", "i0", "kappa"):
        assert_rel(getattr(cert, name), ref[name])


def test_no_hysteresis_is_certified(classical_params):
    cert = compute_certificate(classical_params)
    assert cert.verdict is Verdict.CERTIFIED
    assert cert.q0 == 0.0
    assert cert.eps0 == 2.0
    assert cert.b == 0.0
    assert 0.0 < cert.p < 1.0
    assert cert.within_hypotheses


def test_large_hysteresis_is_not_certified():
    cert = compute_certificate(make_params(1.8, 1.7, 0.5))
    assert cert.verdict is Verdict.NOT_CERTIFIED
    assert cert.kappa < 0.0
    assert cert.p is None
    assert cert.q0 == pytest.approx(0.2, abs=1e-12)
    assert cert.eps0 == pytest.approx(1.5, abs=1e-12)
    assert 0.0 < cert.delta_star < 0.1


def test_atomic_density_is_outside_hypotheses(single_relay):
    cert = compute_certificate(make_params(2.0, 1.2, 0.5, single_relay))
    assert cert.verdict is Verdict.NOT_CERTIFIED
    assert math.isinf(cert.q0)
    assert not cert.within_hypotheses
    assert cert.delta_star == 0.0
    # infinities survive the JSON export
    payload = json.loads(cert.model_dump_json())
    assert payload["q0"] == math.inf


@pytest.mark.parametrize("r0_nat", [1.5, 2.0, 3.0])
@pytest.mark.parametrize("rho", [0.1, 0.5])
def test_delta_threshold_brackets_sign_change(r0_nat, rho):
    sup_q = UniformDensity().sup_q
    delta_star = delta_threshold(r0_nat, rho, UniformDensity())
    assert delta_star > 0.0
    assert kappa_at(r0_nat, delta_star * (1 - 1e-9), rho, sup_q) > 0
    assert kappa_at(r0_nat, delta_star, rho, sup_q) > 0
    assert kappa_at(r0_nat, delta_star * (1 + 1e-9), rho, sup_q) < 0


def test_delta_threshold_errors(single_relay):
    with pytest.raises(InvalidHypotheses):
        delta_threshold(1.0, 0.5, UniformDensity())
    with pytest.raises(InvalidHypotheses):
        delta_threshold(2.0, 1.5, UniformDensity())
    with pytest.raises(NoCertifiedInterval):
        delta_threshold(2.0, 0.5, single_relay)


def test_kappa_at_saturated_delta():
    assert kappa_at(2.0, 1.0, 0.5, 2.0) == -mpmath.inf


def _certified_params():
    delta_star = delta_threshold(2.0, 0.5, UniformDensity())
    return make_params(2.0, 2.0 - 0.5 * delta_star, 0.5)


def test_geometric_decay():
    params = _certified_params()
    cert = compute_certificate(params)
    assert cert.certified
    for state in random_initial_states(3, seed=5):
        report = geometric_decay_check(params, integrate(params, state), cert)
        assert report.passed


@pytest.mark.slow
def test_geometric_decay_corpus():
    params = _certified_params()
    cert = compute_certificate(params)
    for state in random_initial_states(20, seed=0):
        report = geometric_decay_check(params, integrate(params, state), cert)
        assert report.passed, [r for r in report.failures]

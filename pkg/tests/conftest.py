"""HystSIR - Shared test fixtures"""
import numpy as np
import pytest

from hystsir.density import AtomicDensity, AtomicRelay, UniformDensity, gaussian_grid_density
from hystsir.dynamics import SirParams
from hystsir.preisach import operator_from


def make_params(r0_nat: float, r0_int: float, rho: float, density=None) -> SirParams:
    op = operator_from(density or UniformDensity(), r0_nat, r0_int)
    return SirParams(rho=rho, operator=op)


def random_program(rng: np.random.Generator, max_segments: int = 20) -> list[float]:
    """Piecewise-monotone program of target values in [0, 1]"""
    n = int(rng.integers(1, max_segments + 1))
    return [float(x) for x in rng.uniform(0.0, 1.0, size=n)]


@pytest.fixture
def uniform_params() -> SirParams:
    """Uniform density, r0_nat 2.0, r0_int 1.8, rho 0.1"""
    return make_params(2.0, 1.8, 0.1)


@pytest.fixture
def classical_params() -> SirParams:
    """No hysteresis: R0 = 2, rho = 0.5"""
    return make_params(2.0, 2.0, 0.5)


@pytest.fixture
def single_relay() -> AtomicDensity:
    return AtomicDensity(relays=[AtomicRelay(a1=0.12, a2=0.18, w=1.0)])


@pytest.fixture
def two_relays() -> AtomicDensity:
    return AtomicDensity(relays=[
        AtomicRelay(a1=0.1, a2=0.4, w=0.25),
        AtomicRelay(a1=0.3, a2=0.7, w=0.75),
    ])


@pytest.fixture
def gaussian_density():
    return gaussian_grid_density((0.3, 0.6), 0.2, n=8)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240501)

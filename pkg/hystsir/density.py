"""HystSIR - Preisach densities on the triangle 0 <= a1 < a2 <= 1

Each density exposes the corner-cumulative mass

    G(a, b) = mass of {alpha in triangle : alpha1 < a, alpha2 <= b}

which is all the memory-curve output needs.
"""
import logging
import math
from functools import cached_property
from typing import Annotated, Literal, NamedTuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from hystsir.errors import InvalidInput
from hystsir.state import ThresholdPair

logger = logging.getLogger(__name__)


def _unit(x: float) -> float:
    return min(max(float(x), 0.0), 1.0)


class UniformDensity(BaseModel):
    """q = 2 on the whole triangle"""
    model_config = ConfigDict(extra="forbid")

    kind: Literal["uniform"] = "uniform"

    @property
    def sup_q(self) -> float:
        return 2.0

    @property
    def strictly_positive(self) -> bool:
        return True

    def corner_cumulative(self, a: float, b: float) -> float:
        b = _unit(b)
        a = min(_unit(a), b)
        return 2.0 * a * b - a * a

    def pdf(self, a1: float, a2: float) -> float:
        return 2.0 if 0.0 <= a1 < a2 <= 1.0 else 0.0


class GridTables(NamedTuple):
    mass: np.ndarray
    # rows[i, j] = mass[i, :j].sum(), cols[i, j] = mass[:i, j].sum()
    rows: np.ndarray
    cols: np.ndarray
    prefix: np.ndarray


class GridDensity(BaseModel):
    """Piecewise constant density on an n x n grid of the unit square.

    values are row-major with the row index along alpha1. Cells below the
    diagonal carry no mass and diagonal cells contribute their upper half.
    The values are rescaled to unit mass on load.
    """
    model_config = ConfigDict(extra="forbid")

    kind: Literal["grid"] = "grid"
    nx: int = Field(ge=1)
    ny: int = Field(ge=1)
    values: list[float]

    @model_validator(mode="after")
    def _check_grid(self) -> "GridDensity":
        if self.nx != self.ny:
            raise ValueError(f"grid density must be square, got {self.nx}x{self.ny}")
        if len(self.values) != self.nx * self.ny:
            raise ValueError(f"expected {self.nx * self.ny} grid values, got {len(self.values)}")
        if any(not math.isfinite(v) or v < 0.0 for v in self.values):
            raise ValueError("grid values must be finite and non-negative")
        w = self.weights
        if np.triu(w, 1).sum() + 0.5 * np.trace(w) <= 0.0:
            raise ValueError("grid density has no mass on the triangle")
        return self

    @property
    def n(self) -> int:
        return self.nx

    @cached_property
    def weights(self) -> np.ndarray:
        """Cell values rescaled so that the density integrates to 1 over the triangle"""
        w = np.asarray(self.values, dtype=float).reshape(self.nx, self.ny)
        total = (np.triu(w, 1).sum() + 0.5 * np.trace(w)) / (self.nx * self.ny)
        return w / total if total > 0.0 else w

    @cached_property
    def tables(self) -> "GridTables":
        n = self.n
        w = self.weights
        mass = (np.triu(w, 1) + 0.5 * np.diag(np.diag(w))) / (n * n)
        prefix = np.zeros((n + 1, n + 1))
        prefix[1:, 1:] = np.cumsum(np.cumsum(mass, axis=0), axis=1)
        return GridTables(
            mass=mass,
            rows=np.concatenate([np.zeros((n, 1)), np.cumsum(mass, axis=1)], axis=1),
            cols=np.concatenate([np.zeros((1, n)), np.cumsum(mass, axis=0)], axis=0),
            prefix=prefix,
        )

    @property
    def sup_q(self) -> float:
        return float(self.weights[np.triu_indices(self.n)].max())

    @property
    def strictly_positive(self) -> bool:
        return bool(np.all(self.weights[np.triu_indices(self.n)] > 0.0))

    def _locate(self, x: float) -> tuple[int, float]:
        n = self.n
        idx = min(int(x * n), n - 1)
        return idx, x * n - idx

    def corner_cumulative(self, a: float, b: float) -> float:
        b = _unit(b)
        a = min(_unit(a), b)
        ia, fa = self._locate(a)
        jb, fb = self._locate(b)
        t = self.tables
        m = t.mass

        # full cells, then the partial row at jb, then the partial column at ia and its corner
        total = t.prefix[ia, jb] + fb * t.cols[ia, jb]
        if ia < jb:
            total += fa * (t.rows[ia, jb] - t.rows[ia, ia + 1])
            total += m[ia, ia] * (2.0 * fa - fa * fa)
            total += fa * fb * m[ia, jb]
        else:
            total += m[ia, ia] * (2.0 * fa * fb - fa * fa)
        return float(total)

    def pdf(self, a1: float, a2: float) -> float:
        if not (0.0 <= a1 < a2 <= 1.0):
            return 0.0
        i, _ = self._locate(a1)
        j, _ = self._locate(a2)
        return float(self.weights[i, j])


class AtomicRelay(BaseModel):
    model_config = ConfigDict(extra="forbid")

    a1: float
    a2: float
    w: float = Field(gt=0.0)

    @property
    def thresholds(self) -> ThresholdPair:
        return ThresholdPair(alpha1=self.a1, alpha2=self.a2)


class AtomicDensity(BaseModel):
    """Discrete Preisach model: finitely many weighted relays"""
    model_config = ConfigDict(extra="forbid")

    kind: Literal["atomic"] = "atomic"
    relays: list[AtomicRelay] = Field(min_length=1)

    @model_validator(mode="after")
    def _check_relays(self) -> "AtomicDensity":
        for relay in self.relays:
            relay.thresholds  # raises InvalidThresholds
        total = sum(r.w for r in self.relays)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"atomic weights must sum to 1, got {total}")
        return self

    @cached_property
    def alpha1(self) -> np.ndarray:
        return np.array([r.a1 for r in self.relays], dtype=float)

    @cached_property
    def alpha2(self) -> np.ndarray:
        return np.array([r.a2 for r in self.relays], dtype=float)

    @cached_property
    def weights(self) -> np.ndarray:
        w = np.array([r.w for r in self.relays], dtype=float)
        return w / w.sum()

    @property
    def sup_q(self) -> float:
        return math.inf

    @property
    def strictly_positive(self) -> bool:
        return False

    def corner_cumulative(self, a: float, b: float) -> float:
        on = (self.alpha1 < a) & (self.alpha2 <= b)
        return float(self.weights[on].sum())

    def thresholds(self) -> list[float]:
        """Sorted distinct switching values of all relays"""
        return sorted(set(self.alpha1.tolist()) | set(self.alpha2.tolist()))


Density = Annotated[
    Union[UniformDensity, GridDensity, AtomicDensity],
    Field(discriminator="kind"),
]


def gaussian_grid_density(center: tuple[float, float], sigma: float, n: int = 64) -> GridDensity:
    """Strictly positive grid density concentrated around center with spread sigma"""
    if sigma <= 0.0:
        raise InvalidInput(f"sigma must be positive, got {sigma}")
    if n < 1:
        raise InvalidInput(f"grid size must be positive, got {n}")
    h = 1.0 / n
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    x = (i + 0.5) * h
    y = (j + 0.5) * h
    # diagonal cells are evaluated at the centroid of their upper triangle
    diag = i == j
    x = np.where(diag, (i + 1.0 / 3.0) * h, x)
    y = np.where(diag, (j + 2.0 / 3.0) * h, y)
    r2 = (x - center[0]) ** 2 + (y - center[1]) ** 2
    values = np.exp(-r2 / (2.0 * sigma * sigma))
    values = np.maximum(values, np.finfo(float).tiny)
    logger.debug(f"gaussian grid density n={n} center={center} sigma={sigma}")
    return GridDensity(nx=n, ny=n, values=values.ravel().tolist())

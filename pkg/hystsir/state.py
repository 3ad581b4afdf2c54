"""HystSIR - State Definitions"""
from enum import Enum
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from hystsir.errors import InvalidThresholds

# Corners of the staircase closer than this are merged
CORNER_TOL = 1e-12


class Direction(str, Enum):
    RISING = "rising"
    FALLING = "falling"

    @property
    def flipped(self) -> "Direction":
        return Direction.FALLING if self is Direction.RISING else Direction.RISING


class SwitchKind(str, Enum):
    START = "start"
    TURN = "turn"
    THRESHOLD = "threshold"


class Outcome(str, Enum):
    EQUILIBRIUM = "equilibrium"
    ORBIT = "orbit"
    TIMEOUT = "timeout"


class EquilibriumType(str, Enum):
    FOCUS = "focus"
    NODE = "node"


class Verdict(str, Enum):
    CERTIFIED = "certified"
    NOT_CERTIFIED = "not_certified"


# ============== RELAYS ==============

class ThresholdPair(BaseModel):
    """A point of the Preisach triangle 0 <= alpha1 < alpha2 <= 1"""
    model_config = ConfigDict(frozen=True)

    alpha1: float
    alpha2: float

    @model_validator(mode="after")
    def _inside_triangle(self) -> "ThresholdPair":
        if not (0.0 <= self.alpha1 < self.alpha2 <= 1.0):
            raise InvalidThresholds(
                f"thresholds ({self.alpha1}, {self.alpha2}) are not in 0 <= a1 < a2 <= 1"
            )
        return self


class RelayState(BaseModel):
    model_config = ConfigDict(frozen=True)

    thresholds: ThresholdPair
    state: int = Field(ge=0, le=1)


class Segment(BaseModel):
    """Monotone input path from start to end; only the endpoints matter"""
    model_config = ConfigDict(frozen=True)

    start: float = Field(ge=0.0, le=1.0)
    end: float = Field(ge=0.0, le=1.0)

    @property
    def direction(self) -> Optional[Direction]:
        if self.end > self.start:
            return Direction.RISING
        if self.end < self.start:
            return Direction.FALLING
        return None


# ============== PREISACH MEMORY ==============

class MemoryCurve(BaseModel):
    """Reduced alternating sequence (M1, m1, M2, m2, ...) of dominant past extrema.

    An odd number of extrema means the last move was falling from the last maximum;
    an even number (or none) means it was rising from the last minimum (or from 0).
    """
    model_config = ConfigDict(frozen=True)

    extrema: tuple[float, ...] = ()
    current: float = 0.0

    @model_validator(mode="after")
    def _check_staircase(self) -> "MemoryCurve":
        values = (*self.extrema, self.current)
        if any(not (0.0 <= x <= 1.0) for x in values):
            raise ValueError("memory values must lie in [0, 1]")
        maxima, minima = self.maxima, self.minima
        if any(a <= b for a, b in zip(maxima, maxima[1:])):
            raise ValueError("memory maxima must be strictly decreasing")
        if any(a >= b for a, b in zip(minima, minima[1:])):
            raise ValueError("memory minima must be strictly increasing")
        if minima and maxima[-1] <= minima[-1]:
            raise ValueError("every memory maximum must exceed every later minimum")
        if self.extrema:
            last = self.extrema[-1]
            if self.last_rising:
                if not (last <= self.current < maxima[-1]):
                    raise ValueError(
                        f"current value {self.current} must lie in [{last}, {maxima[-1]})"
                    )
            else:
                floor = minima[-1] if minima else 0.0
                if not (floor < self.current <= last):
                    raise ValueError(
                        f"current value {self.current} must lie in ({floor}, {last}]"
                    )
        return self

    @property
    def maxima(self) -> tuple[float, ...]:
        return self.extrema[0::2]

    @property
    def minima(self) -> tuple[float, ...]:
        return self.extrema[1::2]

    @property
    def last_rising(self) -> bool:
        return len(self.extrema) % 2 == 0

    @property
    def is_virgin(self) -> bool:
        return not self.extrema and self.current == 0.0

    def staircase(self) -> list[tuple[float, float]]:
        """Corner pairs (M_k, mu_k): the ON set is the union of {a2 <= M_k, a1 < mu_k}"""
        points = (*self.extrema, self.current)
        corners = [(points[i], points[i + 1]) for i in range(0, len(points) - 1, 2)]
        if len(points) % 2 == 1:
            corners.append((self.current, self.current))
        return corners


# ============== PHASE SPACE ==============

class SirState(BaseModel):
    """A point (I, S) of the open phase space together with the hysteresis memory"""
    model_config = ConfigDict(frozen=True)

    I: float
    S: float
    memory: MemoryCurve

    @model_validator(mode="after")
    def _check_phase_space(self) -> "SirState":
        if self.I <= 0.0 or self.S <= 0.0:
            raise ValueError(f"I and S must be positive, got I={self.I}, S={self.S}")
        if self.I + self.S > 1.0:
            raise ValueError(f"I + S must not exceed 1, got {self.I + self.S}")
        if abs(self.memory.current - self.I) > 1e-12:
            raise ValueError(
                f"memory current value {self.memory.current} does not match I={self.I}"
            )
        return self


class IntegratorConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    rtol: float = Field(default=1e-9, gt=0.0)
    atol: float = Field(default=1e-12, gt=0.0)
    event_tol: float = Field(default=1e-10, gt=0.0)
    t_max: float = Field(default=2000.0, gt=0.0)
    max_step: float = Field(default=0.25, gt=0.0)
    conv_tol: float = Field(default=1e-10, gt=0.0)
    chatter_dt: float = Field(default=1e-9, ge=0.0)
    orbit_tol: float = Field(default=1e-8, gt=0.0)
    orbit_returns: int = Field(default=5, ge=1)
    max_switches: int = Field(default=100_000, ge=1)


# ============== TRAJECTORIES ==============

class SwitchRecord(BaseModel):
    """State at a switching moment t_k and the branch that starts there"""
    k: int
    t: float
    I: float
    S: float
    kind: SwitchKind
    direction: Direction
    memory: MemoryCurve
    endemic_I: float
    endemic_S: float


class Trajectory(BaseModel):
    t: list[float] = Field(default_factory=list)
    I: list[float] = Field(default_factory=list)
    S: list[float] = Field(default_factory=list)
    R0: list[float] = Field(default_factory=list)
    switch: list[bool] = Field(default_factory=list)
    branch: list[int] = Field(default_factory=list)
    records: list[SwitchRecord] = Field(default_factory=list)
    outcome: Outcome = Outcome.TIMEOUT
    orbit_detected: bool = False
    grazing_suspected: bool = False
    final_memory: MemoryCurve = Field(default_factory=MemoryCurve)

    @property
    def converged(self) -> bool:
        return self.outcome is Outcome.EQUILIBRIUM

    @property
    def switch_times(self) -> list[float]:
        return [r.t for r in self.records if r.kind is not SwitchKind.START]

    @property
    def limit(self) -> Optional[tuple[float, float]]:
        if not self.converged or not self.t:
            return None
        return self.I[-1], self.S[-1]

    def segment_slice(self, k: int) -> slice:
        """Sample indices that belong to branch k"""
        idx = [i for i, b in enumerate(self.branch) if b == k]
        if not idx:
            return slice(0, 0)
        return slice(idx[0], idx[-1] + 1)


class EndemicSegment(BaseModel):
    """Connected continuum of endemic equilibria on the line S = 1 - I/rho"""
    I_lo: float
    I_hi: float
    rho: float

    @property
    def is_degenerate(self) -> bool:
        return self.I_hi - self.I_lo <= CORNER_TOL

    def point(self, theta: float) -> tuple[float, float]:
        I = self.I_lo + theta * (self.I_hi - self.I_lo)
        return I, 1.0 - I / self.rho

    def r0(self, theta: float) -> float:
        return 1.0 / self.point(theta)[1]

    def contains(self, I: float, S: float, tol: float = 1e-6) -> bool:
        on_line = abs(S - (1.0 - I / self.rho)) <= tol
        return on_line and self.I_lo - tol <= I <= self.I_hi + tol


class InfectionFreePoint(BaseModel):
    I: float = 0.0
    S: float = 1.0
    r0: float
    eigenvalues: tuple[float, float]
    saddle: bool
    memory: MemoryCurve = Field(default_factory=MemoryCurve)


# ============== CERTIFICATES ==============

class StabilityCertificate(BaseModel):
    model_config = ConfigDict(ser_json_inf_nan="constants")

    q0: float
    eps0: float
    i0: float
    s0: float
    kappa: float
    a: float
    b: float
    p: Optional[float]
    verdict: Verdict
    delta_star: float
    within_hypotheses: bool
    inputs: dict = Field(default_factory=dict)

    @property
    def certified(self) -> bool:
        return self.verdict is Verdict.CERTIFIED


class LemmaRecord(BaseModel):
    model_config = ConfigDict(ser_json_inf_nan="constants", populate_by_name=True)

    lemma: str
    k: int
    lhs: float
    rhs: float
    margin: float
    passed: bool = Field(serialization_alias="pass")
    detail: str = ""
    # reported for inspection, never counted as a failure
    informational: bool = False


class LemmaReport(BaseModel):
    model_config = ConfigDict(ser_json_inf_nan="constants")

    records: list[LemmaRecord] = Field(default_factory=list)

    @property
    def failures(self) -> list[LemmaRecord]:
        return [r for r in self.records if not r.passed and not r.informational]

    @property
    def passed(self) -> bool:
        return not self.failures

    def extend(self, other: "LemmaReport") -> None:
        self.records.extend(other.records)

    def rows(self) -> list[dict]:
        return [
            r.model_dump(by_alias=True, include={"lemma", "k", "lhs", "rhs", "margin", "passed"})
            for r in self.records
        ]

"""HystSIR - Preisach operator with memory-curve state

The output is R0 = r0_nat - (r0_nat - r0_int) * W, where W is the density mass of
relays that are ON below the staircase of the memory curve.
"""
import bisect
import logging
from typing import Iterable, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from hystsir.density import AtomicDensity, Density
from hystsir.errors import ContractViolation, DirectionMismatch, InvalidHypotheses
from hystsir.state import CORNER_TOL, Direction, MemoryCurve, Segment

logger = logging.getLogger(__name__)

# Tolerance when matching an input value against the memory's current value
INPUT_TOL = 1e-12


class PreisachOperator(BaseModel):
    model_config = ConfigDict(frozen=True)

    density: Density
    r0_nat: float
    r0_int: float
    memory: MemoryCurve = Field(default_factory=MemoryCurve)

    @model_validator(mode="after")
    def _check_reproduction_numbers(self) -> "PreisachOperator":
        if self.r0_int <= 1.0:
            raise InvalidHypotheses(f"r0_int must exceed 1, got {self.r0_int}")
        if self.r0_nat < self.r0_int:
            raise InvalidHypotheses(
                f"r0_nat ({self.r0_nat}) must not be below r0_int ({self.r0_int})"
            )
        return self

    @property
    def delta(self) -> float:
        return self.r0_nat - self.r0_int

    @property
    def current(self) -> float:
        return self.memory.current

    def with_memory(self, memory: MemoryCurve) -> "PreisachOperator":
        return self.model_copy(update={"memory": memory})


# ============== MEMORY CURVE ==============

def advance_memory(memory: MemoryCurve, target: float) -> MemoryCurve:
    """Staircase update for a monotone move from memory.current to target"""
    if not (0.0 <= target <= 1.0):
        raise ContractViolation(f"input value {target} is outside [0, 1]")
    v = memory.current
    ext = list(memory.extrema)

    if target > v:
        if len(ext) % 2 == 1:
            _push_corner(ext, v)
        while ext and ext[-2] <= target:
            del ext[-2:]
    elif target < v:
        # from the virgin state a fall from ~0 leaves no corner
        if len(ext) % 2 == 0 and (ext or v > CORNER_TOL):
            _push_corner(ext, v)
        while len(ext) >= 2 and ext[-2] >= target:
            del ext[-2:]
        if len(ext) == 1 and target <= 0.0:
            ext = []
    else:
        return memory

    return MemoryCurve(extrema=tuple(ext), current=target)


def _push_corner(ext: list[float], value: float) -> None:
    # a reversal within CORNER_TOL of the previous extremum cancels it instead
    if ext and abs(ext[-1] - value) < CORNER_TOL:
        ext.pop()
    else:
        ext.append(value)


def virgin_rise(value: float) -> MemoryCurve:
    return advance_memory(MemoryCurve(), value)


def on_mass(density: Density, memory: MemoryCurve) -> float:
    """Density mass of the ON region, telescoped over the staircase corners"""
    mass = 0.0
    prev_min = 0.0
    for upper, lower in memory.staircase():
        mass += density.corner_cumulative(lower, upper) - density.corner_cumulative(prev_min, upper)
        prev_min = lower
    return mass


# ============== OPERATOR API ==============

def preisach_apply(op: PreisachOperator, segment: Segment) -> PreisachOperator:
    if abs(segment.start - op.current) > INPUT_TOL:
        raise ContractViolation(
            f"segment starts at {segment.start} but the operator input is {op.current}"
        )
    return op.with_memory(advance_memory(op.memory, segment.end))


def preisach_run(op: PreisachOperator, program: Iterable[float]) -> PreisachOperator:
    """Drive the operator through a piecewise-monotone program of target values"""
    for target in program:
        op = preisach_apply(op, Segment(start=op.current, end=target))
    return op


def preisach_output(op: PreisachOperator) -> float:
    return op.r0_nat - op.delta * on_mass(op.density, op.memory)


def lipschitz_q0(op: PreisachOperator) -> float:
    if op.delta == 0.0:
        return 0.0
    return op.delta * op.density.sup_q


def epsilon0(op: PreisachOperator) -> float:
    return op.r0_int - lipschitz_q0(op)


# ============== BRANCHES ==============

class Branch:
    """R_r(I) on [0, 1] for the operator frozen at memory r.

    For I above the current value it is the output after a monotone rise to I,
    below it the output after a monotone fall. Corner masses are prefix-summed so
    an evaluation costs two corner_cumulative calls.
    """

    def __init__(self, op: PreisachOperator):
        self.op = op
        self.density = op.density
        self.r0_nat = op.r0_nat
        self.delta = op.delta
        self.memory = op.memory
        self.current = op.memory.current

        v = self.current
        ext = list(op.memory.extrema)

        rise = list(ext)
        if len(rise) % 2 == 1:
            _push_corner(rise, v)
        self._rise_max = rise[0::2]
        self._rise_min = rise[1::2]
        self._rise_prefix = self._prefix(self._rise_max, self._rise_min)
        self._rise_keys = [-m for m in self._rise_max]

        fall = list(ext)
        if len(fall) % 2 == 0 and (fall or v > CORNER_TOL):
            _push_corner(fall, v)
        self._fall_max = fall[0::2]
        self._fall_min = fall[1::2]
        self._fall_prefix = self._prefix(self._fall_max, self._fall_min)

    def _prefix(self, maxima: list[float], minima: list[float]) -> list[float]:
        G = self.density.corner_cumulative
        out = [0.0]
        prev = 0.0
        for upper, lower in zip(maxima, minima):
            out.append(out[-1] + G(lower, upper) - G(prev, upper))
            prev = lower
        return out

    def _rising_mass(self, I: float) -> float:
        G = self.density.corner_cumulative
        # pairs whose maximum exceeds I survive the rise
        j = bisect.bisect_left(self._rise_keys, -I)
        prev = self._rise_min[j - 1] if j else 0.0
        return self._rise_prefix[j] + G(I, I) - G(prev, I)

    def _falling_mass(self, I: float) -> float:
        if not self._fall_max:
            return 0.0
        G = self.density.corner_cumulative
        # pairs whose minimum lies below I survive the fall
        c = bisect.bisect_left(self._fall_min, I)
        upper = self._fall_max[c]
        prev = self._fall_min[c - 1] if c else 0.0
        return self._fall_prefix[c] + G(I, upper) - G(prev, upper)

    def mass(self, I: float) -> float:
        I = min(max(I, 0.0), 1.0)
        if I >= self.current:
            return self._rising_mass(I)
        return self._falling_mass(I)

    def value(self, I: float) -> float:
        return self.r0_nat - self.delta * self.mass(I)

    def f(self, I: float) -> float:
        return I * self.value(I)

    def slope(self, I: float, h: float = 1e-7) -> float:
        """Central difference of f, one-sided at the ends of [0, 1]"""
        lo = max(I - h, 0.0)
        hi = min(I + h, 1.0)
        return (self.f(hi) - self.f(lo)) / (hi - lo)

    def breakpoints(self) -> list[float]:
        """Points where the branch may fail to be smooth"""
        points = {self.current, *self.memory.extrema}
        if isinstance(self.density, AtomicDensity):
            points.update(self.density.thresholds())
        return sorted(p for p in points if 0.0 < p < 1.0)


def check_direction(op: PreisachOperator, I: float, direction: Direction) -> None:
    if not (0.0 <= I <= 1.0):
        raise ContractViolation(f"input value {I} is outside [0, 1]")
    v = op.current
    if direction is Direction.RISING and I < v - INPUT_TOL:
        raise DirectionMismatch(f"rising branch queried at {I} below current value {v}")
    if direction is Direction.FALLING and I > v + INPUT_TOL:
        raise DirectionMismatch(f"falling branch queried at {I} above current value {v}")


def branch_value(op: PreisachOperator, I: float, direction: Direction) -> float:
    check_direction(op, I, direction)
    return Branch(op).value(I)


def branch_f(op: PreisachOperator, I: float, direction: Direction) -> float:
    return I * branch_value(op, I, direction)


# ============== LOOP DIAGRAMS ==============

def trace_program(
    op: PreisachOperator,
    program: Iterable[float],
    points: int = 50,
) -> tuple[list[tuple[float, float]], PreisachOperator]:
    """Densely sampled (I, R0) pairs along a piecewise-monotone program"""
    samples: list[tuple[float, float]] = [(op.current, preisach_output(op))]
    for target in program:
        branch = Branch(op)
        for I in np.linspace(op.current, target, points + 1)[1:]:
            samples.append((float(I), branch.value(float(I))))
        op = preisach_apply(op, Segment(start=op.current, end=target))
        samples[-1] = (target, preisach_output(op))
    logger.debug(f"traced {len(samples)} loop samples, final memory {op.memory.extrema}")
    return samples, op


def operator_from(
    density: Density,
    r0_nat: float,
    r0_int: float,
    memory: Optional[MemoryCurve] = None,
) -> PreisachOperator:
    return PreisachOperator(
        density=density, r0_nat=r0_nat, r0_int=r0_int, memory=memory or MemoryCurve()
    )

"""HystSIR - Non-ideal relay (lazy switch)"""
import logging
from typing import Iterable, Optional

import numpy as np

from hystsir.errors import ContractViolation, IncompatibleInitialState
from hystsir.state import RelayState, Segment, ThresholdPair

logger = logging.getLogger(__name__)


def _check_unit(value: float, name: str) -> None:
    if not (0.0 <= value <= 1.0):
        raise ContractViolation(f"{name}={value} is outside [0, 1]")


def forced_state(thresholds: ThresholdPair, input_value: float) -> Optional[int]:
    """State imposed by the input alone, or None inside the hysteresis band"""
    if input_value <= thresholds.alpha1:
        return 0
    if input_value >= thresholds.alpha2:
        return 1
    return None


def relay_init(
    thresholds: ThresholdPair,
    input_value: float,
    requested_state: Optional[int] = None,
) -> RelayState:
    """Initial relay state compatible with input_value.

    Inside the band the requested state is used (OFF when none is given); outside
    it the forced value wins and a contradicting request is rejected.
    """
    _check_unit(input_value, "input_value")
    if requested_state not in (None, 0, 1):
        raise IncompatibleInitialState(f"relay state must be 0 or 1, got {requested_state}")

    forced = forced_state(thresholds, input_value)
    if forced is None:
        return RelayState(thresholds=thresholds, state=requested_state or 0)
    if requested_state is not None and requested_state != forced:
        raise IncompatibleInitialState(
            f"input {input_value} forces state {forced} for thresholds "
            f"({thresholds.alpha1}, {thresholds.alpha2}), requested {requested_state}"
        )
    return RelayState(thresholds=thresholds, state=forced)


def relay_step(state: RelayState, segment: Segment) -> RelayState:
    """Advance the relay along a monotone input segment"""
    forced = forced_state(state.thresholds, segment.start)
    if forced is not None and forced != state.state:
        raise ContractViolation(
            f"relay state {state.state} is not compatible with segment start {segment.start}"
        )

    direction = segment.direction
    if direction is None:
        return state
    new_state = forced_state(state.thresholds, segment.end)
    if new_state is None or new_state == state.state:
        return state
    return state.model_copy(update={"state": new_state})


def relay_run(state: RelayState, input_value: float, program: Iterable[float]) -> RelayState:
    """Step through a piecewise-monotone program of target input values"""
    current = input_value
    for target in program:
        state = relay_step(state, Segment(start=current, end=target))
        current = target
    return state


# ============== VECTORIZED ENSEMBLES ==============

def relay_init_many(alpha1: np.ndarray, alpha2: np.ndarray, input_value: float) -> np.ndarray:
    """States of many relays started from input_value, OFF inside the band"""
    _check_unit(input_value, "input_value")
    return (np.asarray(alpha2) <= input_value).astype(np.int8)


def relay_step_many(
    alpha1: np.ndarray,
    alpha2: np.ndarray,
    states: np.ndarray,
    start: float,
    end: float,
) -> np.ndarray:
    """Apply one monotone segment to an ensemble of relays at once"""
    _check_unit(start, "start")
    _check_unit(end, "end")
    alpha1 = np.asarray(alpha1)
    alpha2 = np.asarray(alpha2)
    out = np.array(states, dtype=np.int8, copy=True)
    if end > start:
        out[alpha2 <= end] = 1
    elif end < start:
        out[alpha1 >= end] = 0
    return out

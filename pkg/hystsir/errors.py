"""HystSIR - Exception hierarchy

Domain errors do not derive from ValueError: pydantic only wraps
ValueError/AssertionError raised inside validators, so these propagate unchanged.
"""


class HysteresisError(Exception):
    """Base class for every error raised by the library"""


# ============== INPUT ERRORS (exit code 1) ==============

class InvalidInput(HysteresisError):
    """The caller supplied data that violates a model hypothesis"""


class InvalidThresholds(InvalidInput):
    """Relay thresholds are not an admissible pair of the Preisach triangle"""


class IncompatibleInitialState(InvalidInput):
    """A requested relay or memory state contradicts the current input value"""


class InvalidHypotheses(InvalidInput):
    """Reproduction numbers or rho fall outside the model's standing assumptions"""


class DirectionMismatch(InvalidInput):
    """A branch was queried on the wrong side of the current input value"""


class ConfigError(InvalidInput):
    """A scenario file cannot be read or resolved"""


# ============== RUNTIME ERRORS (exit code 2) ==============

class ContractViolation(HysteresisError):
    """A precondition between consecutive operations was broken"""


class StepFailure(HysteresisError):
    """The adaptive step controller gave up"""


class NonFiniteState(HysteresisError):
    """The integrated state left the finite reals"""


class GrazingDetected(HysteresisError):
    """Two switching events fired closer than the chatter threshold"""


class RootBracketFailure(HysteresisError):
    """A scalar root could not be bracketed"""


class NoCertifiedInterval(HysteresisError):
    """The descent constant is non-positive even for vanishing hysteresis"""

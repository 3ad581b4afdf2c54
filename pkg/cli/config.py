"""HystSIR - Scenario configuration"""
import json
import logging
import os
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, model_validator

from hystsir.density import Density, UniformDensity
from hystsir.dynamics import SirParams, initial_state
from hystsir.errors import ConfigError
from hystsir.preisach import operator_from
from hystsir.state import IntegratorConfig, SirState

load_dotenv()

logger = logging.getLogger(__name__)

PRNG_NAME = "PCG64"
MAX_SWEEP_CELLS = 10_000


def env_log_level() -> str:
    return os.getenv("HYSIR_LOG_LEVEL", "INFO").upper()


def env_jobs() -> int:
    raw = os.getenv("HYSIR_JOBS", "1")
    try:
        return max(int(raw), 1)
    except ValueError:
        raise ConfigError(f"HYSIR_JOBS must be an integer, got {raw!r}")


class InitialSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    I0: float
    S0: float
    memory: Union[Literal["virgin"], list[float]] = "virgin"


# ============== SWEEPS ==============

class DeltaSweep(BaseModel):
    """r0_int = r0_nat - delta for each value"""
    model_config = ConfigDict(extra="forbid")

    axis: Literal["delta"] = "delta"
    values: list[float] = Field(min_length=1)

    def cells(self) -> list[dict]:
        return [{"delta": d} for d in self.values]


class SpreadSweep(BaseModel):
    """Gaussian grid densities of increasing spread around one center"""
    model_config = ConfigDict(extra="forbid")

    axis: Literal["spread"] = "spread"
    center: tuple[float, float] = (0.3, 0.6)
    sigmas: list[float] = Field(min_length=1)
    n: int = Field(default=32, ge=1)

    def cells(self) -> list[dict]:
        return [{"sigma": s} for s in self.sigmas]


class ThresholdSweep(BaseModel):
    """Single-relay atomic densities over a grid of threshold pairs"""
    model_config = ConfigDict(extra="forbid")

    axis: Literal["thresholds"] = "thresholds"
    a1: list[float] = Field(min_length=1)
    a2: list[float] = Field(min_length=1)

    def cells(self) -> list[dict]:
        return [{"a1": x, "a2": y} for x in self.a1 for y in self.a2]


SweepSpec = Annotated[
    Union[DeltaSweep, SpreadSweep, ThresholdSweep],
    Field(discriminator="axis"),
]


# ============== SCENARIO ==============

class ScenarioConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    r0_nat: float
    r0_int: float
    rho: float
    density: Density = Field(default_factory=UniformDensity)
    initial: InitialSpec
    integrator: IntegratorConfig = Field(default_factory=IntegratorConfig)
    seed: int = 0
    output: Path = Path("out")
    corpus: int = Field(default=0, ge=0)
    sweep: Optional[SweepSpec] = None

    @model_validator(mode="after")
    def _check_scenario(self) -> "ScenarioConfig":
        # hypothesis errors are raised as they are, phase-space errors become field errors
        self.params()
        self.initial_state()
        if self.sweep is not None and len(self.sweep.cells()) > MAX_SWEEP_CELLS:
            raise ValueError(f"sweep grid has more than {MAX_SWEEP_CELLS} cells")
        return self

    def params(self) -> SirParams:
        op = operator_from(self.density, self.r0_nat, self.r0_int)
        return SirParams(rho=self.rho, operator=op)

    def initial_state(self) -> SirState:
        return initial_state(self.initial.I0, self.initial.S0, self.initial.memory)

    def resolved(self) -> dict:
        """The config as written into every summary"""
        return self.model_dump(mode="json")


def load_config(path: Path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}")
    try:
        json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {path} is not valid JSON: {e}")
    config = ScenarioConfig.model_validate_json(text)
    logger.debug(f"loaded config from {path}")
    return config

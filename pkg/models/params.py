"""
Model coefficients, forcing descriptions, stepping controls and the full run configuration.
"""

from enum import Enum
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator
from pydantic_core import PydanticCustomError

from models.core import MIN_NX, MIN_TRANSVERSE, GridSpec
from zk.presets import (
    ANALYTIC_FORCINGS,
    BVP_SOURCES,
    INITIAL_PRESETS,
    MANUFACTURED_SOLUTIONS,
)

# Largest epsilon the a priori estimates are stated for
ESTIMATE_MODE_MAX_EPSILON: float = 0.25


class ForcingKind(str, Enum):
    ZERO = "zero"
    ANALYTIC = "analytic"
    MANUFACTURED = "manufactured"


class NonlinearExtrapolation(str, Enum):
    # Adams-Bashforth 2, bootstrapped by explicit Euler on the first step
    AB2 = "ab2"
    # Explicit Euler extrapolant on every step
    EXPLICIT_EULER_FIRST_STEP = "explicit_euler_first_step"


class ForcingSpec(BaseModel):
    """
    Forcing f(x, x_perp, t).

    Analytic presets are looked up by name with their coefficient list. A
    manufactured forcing is defined by an exact solution id and the model
    coefficients it was derived for.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: ForcingKind = ForcingKind.ZERO
    name: str | None = None
    coefficients: tuple[float, ...] = ()
    solution: str | None = None
    model_c: float | None = None
    model_epsilon: float | None = None
    model_nonlinear: bool = True

    @model_validator(mode="after")
    def check_preset(self) -> "ForcingSpec":
        if self.kind == ForcingKind.ANALYTIC:
            if self.name not in ANALYTIC_FORCINGS:
                raise PydanticCustomError(
                    "preset_known",
                    "unknown analytic forcing preset '{name}'",
                    {"name": self.name},
                )
            arity: int = ANALYTIC_FORCINGS[self.name].arity
            if len(self.coefficients) != arity:
                raise PydanticCustomError(
                    "preset_known",
                    "forcing preset '{name}' takes {arity} coefficients",
                    {"name": self.name, "arity": arity},
                )
        if self.kind == ForcingKind.MANUFACTURED and (
            self.solution not in MANUFACTURED_SOLUTIONS
        ):
            raise PydanticCustomError(
                "preset_known",
                "unknown manufactured solution '{solution}'",
                {"solution": self.solution},
            )
        return self


class ModelParams(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    c: float = Field(default=1.0, gt=0.0)
    epsilon: float = Field(default=0.0, ge=0.0)
    nonlinear: bool = True
    forcing: ForcingSpec = ForcingSpec()


class StepConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    theta: float = Field(default=0.5, ge=0.5, le=1.0)
    cfl: float = Field(default=0.5, gt=0.0)
    dt_min: float = Field(default=1e-6, gt=0.0)
    dt_max: float = Field(default=1e-3, gt=0.0)
    nonlinear_extrapolation: NonlinearExtrapolation = NonlinearExtrapolation.AB2

    @model_validator(mode="after")
    def check_dt_order(self) -> "StepConfig":
        if self.dt_min > self.dt_max:
            raise PydanticCustomError(
                "dt_order",
                "dt_min = {dt_min} exceeds dt_max = {dt_max}",
                {"dt_min": self.dt_min, "dt_max": self.dt_max},
            )
        return self


class ModelSection(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    c: float = Field(default=1.0, gt=0.0)
    epsilon: float = Field(default=0.0, ge=0.0)
    nonlinear: bool = True


class InitialSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    preset: str = "zero"
    coefficients: tuple[float, ...] = (1.0,)

    @model_validator(mode="after")
    def check_preset(self) -> "InitialSpec":
        if self.preset not in INITIAL_PRESETS:
            raise PydanticCustomError(
                "preset_known", "unknown initial preset '{preset}'", {"preset": self.preset}
            )
        return self


class RunSection(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    t_end: float = Field(default=0.1, gt=0.0)
    record_interval: float = Field(default=0.01, gt=0.0)
    snapshot_interval: int = Field(default=0, ge=0)
    blowup_factor: float = Field(default=100.0, gt=1.0)
    blowup_norm: Literal["l2", "grad", "sup"] = "l2"
    # Absolute norm the guard factor multiplies; the initial norm when unset
    blowup_reference: float | None = Field(default=None, gt=0.0)
    c_prime: float = Field(default=1.0, gt=0.0)
    enforce_compatibility: bool = False
    threads: int = Field(default=1, ge=1)


class Tolerances(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    solver: float = Field(default=1e-8, gt=0.0)
    compatibility: float = Field(default=1e-6, gt=0.0)
    identity: float = Field(default=1e-6, gt=0.0)
    balance: float = Field(default=1e-10, gt=0.0)
    gronwall_slack: float = Field(default=1e-6, ge=0.0)


class OutputSection(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    directory: str | None = None


def _strictly_decreasing(values: tuple[float, ...], label: str) -> None:
    if any(b >= a for a, b in zip(values, values[1:])):
        raise PydanticCustomError(
            "sweep_decreasing",
            "{label} must be strictly decreasing",
            {"label": label},
        )


class SweepSection(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    epsilons: tuple[float, ...] = (1e-2, 1e-3, 1e-4)

    @model_validator(mode="after")
    def check_order(self) -> "SweepSection":
        _strictly_decreasing(self.epsilons, "sweep.epsilons")
        return self


class BVPSection(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    n: int = Field(default=2048, ge=16)
    source: str = "constant"
    coefficients: tuple[float, ...] = (6.0,)
    epsilons: tuple[float, ...] = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5)
    nonlinear: bool = False
    layer_cutoff: float = Field(default=0.1, gt=0.0, lt=1.0)

    @model_validator(mode="after")
    def check_source(self) -> "BVPSection":
        if self.source not in BVP_SOURCES:
            raise PydanticCustomError(
                "preset_known", "unknown bvp source '{source}'", {"source": self.source}
            )
        _strictly_decreasing(self.epsilons, "bvp.epsilons")
        if any(eps <= 0.0 for eps in self.epsilons):
            raise PydanticCustomError(
                "sweep_decreasing", "bvp.epsilons must be positive", {}
            )
        return self


class MMSSection(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    ladder: tuple[int, ...] = (32, 64, 128)
    solution: str = "poly-exp"
    epsilons: tuple[float, ...] = (0.0, 0.01)
    dt_per_h: float = Field(default=0.05, gt=0.0)

    @model_validator(mode="after")
    def check_solution(self) -> "MMSSection":
        if self.solution not in MANUFACTURED_SOLUTIONS:
            raise PydanticCustomError(
                "preset_known",
                "unknown manufactured solution '{solution}'",
                {"solution": self.solution},
            )
        return self


class VerifySection(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    xtilde: float = Field(default=0.5, gt=0.0, le=1.0)
    snapshot_dir: str | None = None


class RunConfig(BaseModel):
    """Everything one experiment needs. Built by storage.config.parse_config."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    mode: Literal["estimate", "free"] = "free"
    grid: GridSpec = GridSpec()
    model: ModelSection = ModelSection()
    forcing: ForcingSpec = ForcingSpec()
    initial: InitialSpec = InitialSpec()
    step: StepConfig = StepConfig()
    run: RunSection = RunSection()
    tolerances: Tolerances = Tolerances()
    output: OutputSection = OutputSection()
    sweep: SweepSection = SweepSection()
    bvp: BVPSection = BVPSection()
    mms: MMSSection = MMSSection()
    verify: VerifySection = VerifySection()

    @model_validator(mode="after")
    def check_rules(self) -> "RunConfig":
        if self.mode == "estimate" and self.model.epsilon > ESTIMATE_MODE_MAX_EPSILON:
            raise PydanticCustomError(
                "epsilon_quarter",
                "epsilon = {epsilon} violates the hypothesis epsilon <= 1/4 of estimate mode",
                {"epsilon": self.model.epsilon},
            )
        if self.initial.preset == "manufactured" and self.forcing.kind != ForcingKind.MANUFACTURED:
            raise PydanticCustomError(
                "manufactured_initial",
                "initial preset 'manufactured' needs [forcing] kind = 'manufactured', got '{kind}'",
                {"kind": self.forcing.kind.value},
            )
        if self.run.record_interval > self.run.t_end:
            raise PydanticCustomError(
                "record_interval",
                "record_interval = {interval} exceeds t_end = {t_end}",
                {"interval": self.run.record_interval, "t_end": self.run.t_end},
            )
        too_coarse: bool = self.grid.nx < MIN_NX or self.grid.ny < MIN_TRANSVERSE
        if self.grid.d == 2 and self.grid.nz < MIN_TRANSVERSE:
            too_coarse = True
        if too_coarse:
            raise PydanticCustomError(
                "grid_minimum",
                "grid too coarse: need nx >= {nx}, ny (and nz when d = 2) >= {nt}",
                {"nx": MIN_NX, "nt": MIN_TRANSVERSE},
            )
        return self

    @property
    def params(self) -> ModelParams:
        """Model parameters with manufactured forcing bound to the model coefficients."""
        forcing: ForcingSpec = self.forcing
        if forcing.kind == ForcingKind.MANUFACTURED:
            forcing = forcing.model_copy(
                update={
                    "model_c": self.model.c,
                    "model_epsilon": self.model.epsilon,
                    "model_nonlinear": self.model.nonlinear,
                }
            )
        return ModelParams(
            c=self.model.c,
            epsilon=self.model.epsilon,
            nonlinear=self.model.nonlinear,
            forcing=forcing,
        )

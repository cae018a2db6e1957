"""
Result models: per-step diagnostics, identity checks, estimate constants and experiment summaries.
"""

import math
from enum import Enum

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class DiagnosticsRecord(BaseModel):
    """
    Every norm and trace of one recorded state. Field order is the CSV column order.

    Entries involving u_t are None when no time derivative is available.
    """

    t: float
    l2: float
    l2_weighted_x: float
    l2_weighted_1px: float
    ux_l2: float
    uxx_l2: float
    grad_l2: float
    uyy_l2: float
    uzz_l2: float
    xi_norm: float
    trace_ux0: float
    trace_uxx1: float
    ut_l2: float | None = None
    ut_weighted: float | None = None
    grad_ut_l2: float | None = None
    sigma: float
    nonlin_l2: float
    f_l2: float
    ft_l2: float

    @model_validator(mode="after")
    def check_entries(self) -> "DiagnosticsRecord":
        for name, value in self.model_dump().items():
            if value is None:
                continue
            if not math.isfinite(value) or (name != "t" and value < 0.0):
                raise ValueError(f"diagnostics entry {name} = {value} is not a finite non-negative number")
        return self


class IdentityKind(str, Enum):
    BALANCE_U = "balance_u"
    BALANCE_XU = "balance_xu"
    BALANCE_1PX_UT = "balance_1px_ut"
    BALANCE_1PX_UYY = "balance_1px_uyy"
    BALANCE_1PX_UYYYY = "balance_1px_uyyyy"
    EQ_X_MOMENT = "eq_x_moment"
    EQ_PARTIAL_INTEGRAL = "eq_partial_integral"
    UXX_INEQUALITY = "uxx_inequality"


class IdentityReport(BaseModel):
    identity: IdentityKind
    residual: float = Field(ge=0.0)
    resolution: int
    tolerance: float
    passed: bool
    t: float | None = None
    details: dict[str, float] = {}


class CompatibilityReport(BaseModel):
    boundary_residuals: dict[str, float]
    passed: bool
    tolerance: float


class EstimateConstants(BaseModel):
    """Constants of the a priori estimates as measured on one run, for a chosen c'."""

    c_prime: float = Field(gt=0.0)
    nu: float = Field(ge=0.0)
    kappa: float = Field(ge=0.0)
    mu0: float = Field(ge=0.0)
    mu: float = Field(ge=0.0)
    c1: float = Field(ge=0.0)
    c2: float = Field(ge=0.0)
    c3: float = Field(ge=0.0)
    f_sup_l2: float = Field(ge=0.0)
    ft_sup_l2: float = Field(ge=0.0)
    u0x_l2: float = Field(ge=0.0)

    @model_validator(mode="after")
    def check_order(self) -> "EstimateConstants":
        if self.c2 < self.c1:
            raise ValueError("c2 must dominate c1")
        return self


class GronwallReport(BaseModel):
    passed: bool
    growth_passed: bool
    bound_passed: bool
    horizon: float
    bound_margin: float
    max_growth_excess: float
    first_violation_time: float | None = None
    violation: str | None = None


class BoundCheckReport(BaseModel):
    """Pointwise-in-time check |u_x|^2 <= |u_t|^2 + kappa over recorded states."""

    passed: bool
    kappa: float
    c_prime: float
    minimal_c_prime: float
    failures: list[tuple[float, float, float]] = []


class BVPSolution(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    epsilon: float
    x: np.ndarray
    u: np.ndarray
    uxx: np.ndarray
    ux0: float
    ux1: float
    uxx0: float
    uxx1: float
    uxxx1: float
    sup_uxx: float
    iterations: int = 0


class SweepRecord(BaseModel):
    """One member of a singular-perturbation sweep. Field order is the CSV column order."""

    epsilon: float
    sup_uxx: float
    err_outside_layer: float
    layer_width: float
    ux0: float
    uxx1: float
    uxxx1: float


class EpsilonMember(BaseModel):
    epsilon: float
    status: str
    t_reached: float
    sup_l2: float
    grad_sq_time_integral: float


class EpsilonComparison(BaseModel):
    """Distance between consecutive members of an epsilon sweep at the final time."""

    epsilon_a: float
    epsilon_b: float
    t: float
    l2_difference: float


class MMSResult(BaseModel):
    epsilon: float
    nx: int
    dt: float
    error: float
    order: float | None = None


class HorizonResult(BaseModel):
    """Guard outcome of one amplitude; t_trigger is inf when the guard never fired before t_end."""

    model_config = ConfigDict(ser_json_inf_nan="constants")

    amplitude: float
    status: str
    t_trigger: float
    mu: float
    formula_horizon: float | None


class Manifest(BaseModel):
    """Config echo, package versions and checksums of every data file of one output directory."""

    format_version: int = 1
    created: str
    command: str
    config: dict
    versions: dict[str, str]
    files: dict[str, str] = {}

    @field_validator("files")
    @classmethod
    def check_digests(cls, files: dict[str, str]) -> dict[str, str]:
        for name, digest in files.items():
            if len(digest) != 64:
                raise ValueError(f"checksum for {name} is not a sha256 digest")
        return files


class SnapshotEntry(BaseModel):
    """One row of the snapshot index of a run directory."""

    step: int = Field(ge=0)
    t: float
    file: str


class VerificationSummary(BaseModel):
    """Everything verify checks on one trajectory."""

    reports: list[IdentityReport]
    gronwall: GronwallReport | None = None
    bound: BoundCheckReport
    constants: EstimateConstants | None = None

    @property
    def passed(self) -> bool:
        checks: list[bool] = [report.passed for report in self.reports] + [self.bound.passed]
        if self.gronwall is not None:
            checks.append(self.gronwall.passed)
        return all(checks)

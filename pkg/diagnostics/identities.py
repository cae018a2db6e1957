import logging

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.interpolate import make_interp_spline

from models.core import BCTag, Field, Grid
from models.params import ModelParams
from models.records import IdentityKind, IdentityReport
from operators.operators import (
    Axis,
    Side,
    derivative,
    trace,
    transverse_bilaplacian_diag,
    transverse_laplacian,
)

logger = logging.getLogger(__name__)


def source_g(u: Field, params: ModelParams, f: Field, ut: Field | None = None) -> Field:
    """
    g = -u_t - Lap_perp u_x - c u_x - eps (u_yyyy + u_zzzz) + f, so that every
    transverse slice solves u_xxx + u u_x + eps u_xxxx = g.
    """
    grid: Grid = u.grid
    raw: Field = Field(grid, u.values, BCTag.UNCONSTRAINED)
    ux: np.ndarray = derivative(raw, Axis.X, 1).values
    values: np.ndarray = f.values - params.c * ux - transverse_laplacian(grid, ux)
    if params.epsilon > 0.0:
        values = values - params.epsilon * transverse_bilaplacian_diag(grid, raw.values)
    if ut is not None:
        values = values - ut.values
    return Field(grid, values)


def _columns(values: np.ndarray) -> np.ndarray:
    return values.reshape(values.shape[0], -1)


class _Slices:
    """Per transverse location quantities shared by the identities."""

    def __init__(self, u: Field, params: ModelParams, g: Field) -> None:
        grid: Grid = u.grid
        raw: Field = Field(grid, u.values, BCTag.UNCONSTRAINED)
        self.grid: Grid = grid
        self.epsilon: float = params.epsilon
        self.nonlinear: bool = params.nonlinear
        self.u: np.ndarray = _columns(raw.values)
        self.uxx: np.ndarray = _columns(derivative(raw, Axis.X, 2).values)
        self.uxxx: np.ndarray = _columns(derivative(raw, Axis.X, 3).values)
        self.g: np.ndarray = _columns(g.values)
        self.ux0: np.ndarray = trace(raw, 1, Side.LEFT).ravel()
        self.uxx1: np.ndarray = trace(raw, 2, Side.RIGHT).ravel()
        self.uxxx1: np.ndarray = trace(raw, 3, Side.RIGHT).ravel()
        self.half_u_sq: np.ndarray = (
            0.5 * (grid.x_weights @ self.u**2) if self.nonlinear else np.zeros_like(self.ux0)
        )
        self.g_moment: np.ndarray = (grid.x_weights * grid.x) @ self.g
        from_zero: np.ndarray = cumulative_trapezoid(self.g, grid.x, axis=0, initial=0.0)
        self.g_tail: np.ndarray = from_zero[-1] - from_zero

    def at(self, values: np.ndarray, xtilde: float) -> np.ndarray:
        return make_interp_spline(self.grid.x, values, k=1, axis=0)(xtilde)

    def x_moment(self) -> np.ndarray:
        eps: float = self.epsilon
        return (
            self.ux0
            + self.uxx1
            - self.half_u_sq
            - eps * self.uxx1
            + eps * self.uxxx1
            - self.g_moment
        )

    def partial_integral(self, xtilde: float) -> np.ndarray:
        eps: float = self.epsilon
        u_here: np.ndarray = self.at(self.u, xtilde) if self.nonlinear else 0.0
        return (
            self.uxx1
            - self.at(self.uxx, xtilde)
            - 0.5 * u_here**2
            + eps * self.uxxx1
            - eps * self.at(self.uxxx, xtilde)
            - self.at(self.g_tail, xtilde)
        )

    def h(self) -> np.ndarray:
        local_sq: np.ndarray = 0.5 * self.u**2 if self.nonlinear else np.zeros_like(self.u)
        return -self.ux0 + self.half_u_sq + self.g_moment - local_sq - self.g_tail


def auxiliary_h(u: Field, params: ModelParams, f: Field, ut: Field | None = None) -> np.ndarray:
    """
    h(x) = -u_x(0) + 1/2 int u^2 + int g x - 1/2 u(x)^2 - int_x^1 g, with
    u_xx + eps u_xxx = eps u_xx(1) + h on every slice.

    Returns:
        np.ndarray: h shaped like the grid.
    """
    slices: _Slices = _Slices(u, params, source_g(u, params, f, ut))
    return slices.h().reshape(u.grid.shape)


def _report(
    identity: IdentityKind, residuals: np.ndarray, grid: Grid, tolerance: float, **details: float
) -> IdentityReport:
    residual: float = float(np.max(np.abs(residuals), initial=0.0))
    report: IdentityReport = IdentityReport(
        identity=identity,
        residual=residual,
        resolution=grid.nx,
        tolerance=tolerance,
        passed=residual <= tolerance,
        details=details,
    )
    if not report.passed:
        logger.warning("%s residual %.3e above tolerance %.1e", identity.value, residual, tolerance)
    return report


def identity_residuals(
    u: Field,
    params: ModelParams,
    f: Field,
    xtilde: float,
    ut: Field | None = None,
    c_prime: float = 1.0,
    tolerance: float = 1e-6,
) -> list[IdentityReport]:
    """
    Residuals of the slice identities of the steady reduction.

    x moment: u_x(0) + u_xx(1) - 1/2 int u^2 - eps u_xx(1) + eps u_xxx(1) = int g x.
    partial integral on (xtilde, 1): u_xx(1) - u_xx(xtilde) - 1/2 u(xtilde)^2
    + eps u_xxx(1) - eps u_xxx(xtilde) = int g.
    u_xx bound: 1/2 int u_xx^2 + eps/4 u_xx(1)^2 <= c' eps u_x(0)^2 + 1/2 |h|^2.

    Args:
        u (Field): State.
        params (ModelParams): Model coefficients.
        f (Field): Forcing at the time of u.
        xtilde (float): Left end of the partial integral, in (0, 1].
        ut (Field | None): Time derivative of u; None for steady states.
        c_prime (float): Constant of the u_xx bound.
        tolerance (float): Pass threshold of the equalities.

    Returns:
        list[IdentityReport]: x moment, partial integral and u_xx bound, each the max over
        transverse locations. The bound reports its excess and the smallest passing c'.
    """
    if not 0.0 < xtilde <= 1.0:
        raise ValueError(f"xtilde must lie in (0, 1], got {xtilde}")
    grid: Grid = u.grid
    slices: _Slices = _Slices(u, params, source_g(u, params, f, ut))

    h: np.ndarray = slices.h()
    lhs: np.ndarray = 0.5 * (grid.x_weights @ slices.uxx**2) + 0.25 * params.epsilon * slices.uxx1**2
    h_half: np.ndarray = 0.5 * (grid.x_weights @ h**2)
    trace_term: np.ndarray = params.epsilon * slices.ux0**2
    excess: np.ndarray = np.maximum(lhs - c_prime * trace_term - h_half, 0.0)

    shortfall: np.ndarray = lhs - h_half
    with np.errstate(divide="ignore", invalid="ignore"):
        needed: np.ndarray = np.where(
            shortfall > 0.0,
            np.where(trace_term > 0.0, shortfall / trace_term, np.inf),
            0.0,
        )
    minimal_c_prime: float = float(np.max(needed, initial=0.0))

    inequality: IdentityReport = IdentityReport(
        identity=IdentityKind.UXX_INEQUALITY,
        residual=float(np.max(excess, initial=0.0)),
        resolution=grid.nx,
        tolerance=0.0,
        passed=bool(np.all(excess <= 0.0)),
        details={"c_prime": c_prime, "minimal_c_prime": minimal_c_prime},
    )
    return [
        _report(IdentityKind.EQ_X_MOMENT, slices.x_moment(), grid, tolerance),
        _report(
            IdentityKind.EQ_PARTIAL_INTEGRAL,
            slices.partial_integral(xtilde),
            grid,
            tolerance,
            xtilde=xtilde,
        ),
        inequality,
    ]

import logging
from collections.abc import Callable

import numpy as np

from models.core import (
    MIN_NX,
    MIN_TRANSVERSE,
    BCTag,
    Field,
    Grid,
    GridSpec,
    TransverseBC,
)
from models.errors import GridError
from models.params import ModelParams
from models.records import CompatibilityReport
from operators.operators import Axis, Side, derivative, op_A, trace
from zk.zk import forcing_eval

logger = logging.getLogger(__name__)

# Lagrange weights extrapolating cell-centre samples at h/2, 3h/2, 5h/2 to the wall
WALL_EXTRAPOLATION: tuple[float, float, float] = (1.875, -1.25, 0.375)


def make_grid(spec: GridSpec) -> Grid:
    """
    Build the grid for a spec, rejecting resolutions too coarse for the stencils.

    Args:
        spec (GridSpec): Resolution and transverse boundary type.

    Returns:
        Grid: Uniform x nodes k/nx and the transverse basis for spec.transverse_bc.
    """
    if spec.nx < MIN_NX:
        raise GridError(f"grid too coarse: nx = {spec.nx} < {MIN_NX}")
    if spec.ny < MIN_TRANSVERSE:
        raise GridError(f"grid too coarse: ny = {spec.ny} < {MIN_TRANSVERSE}")
    if spec.d == 2 and spec.nz < MIN_TRANSVERSE:
        raise GridError(f"grid too coarse: nz = {spec.nz} < {MIN_TRANSVERSE}")
    return Grid(spec)


def sample(grid: Grid, fn: Callable[..., np.ndarray | float]) -> Field:
    """
    Evaluate a pointwise function of (x, y[, z]) at the grid representation points.

    The function is called once with broadcast coordinate arrays. Constant results
    are broadcast to the grid shape.

    Raises:
        GridError: If any sampled value is NaN or infinite; the message names the point.
    """
    coords: tuple[np.ndarray, ...] = grid.mesh()
    with np.errstate(all="ignore"):
        raw = fn(*coords)
    values: np.ndarray = np.array(
        np.broadcast_to(np.asarray(raw, dtype=float), grid.shape)
    )
    bad: np.ndarray = np.argwhere(~np.isfinite(values))
    if bad.size:
        index: tuple[int, ...] = tuple(int(i) for i in bad[0])
        point: str = ", ".join(
            f"{name}={coord[index]:.6g}" for name, coord in zip("xyz", coords)
        )
        raise GridError(f"non-finite sample value at ({point})")
    return Field(grid, values, BCTag.UNCONSTRAINED)


def wall_values(values: np.ndarray, axis: int) -> tuple[np.ndarray, np.ndarray]:
    """Quadratic extrapolation of cell-centre samples to the two walls of a Dirichlet axis."""
    moved: np.ndarray = np.moveaxis(values, axis, -1)
    weights: np.ndarray = np.asarray(WALL_EXTRAPOLATION)
    left: np.ndarray = moved[..., :3] @ weights
    right: np.ndarray = moved[..., ::-1][..., :3] @ weights
    return left, right


def _max_abs(*arrays: np.ndarray) -> float:
    return max(float(np.max(np.abs(a))) if np.size(a) else 0.0 for a in arrays)


def _wall_residuals(u: Field) -> dict[str, float]:
    grid: Grid = u.grid
    if grid.transverse_bc != TransverseBC.DIRICHLET:
        return {}
    axes: list[tuple[int, Axis]] = [(1, Axis.Y)]
    if grid.z is not None:
        axes.append((2, Axis.Z))

    value_residual: float = 0.0
    curvature_residual: float = 0.0
    for array_axis, axis in axes:
        value_residual = max(value_residual, _max_abs(*wall_values(u.values, array_axis)))
        second: np.ndarray = derivative(u, axis, 2).values
        curvature_residual = max(
            curvature_residual, _max_abs(*wall_values(second, array_axis))
        )
    return {"walls": value_residual, "yy_walls": curvature_residual}


def boundary_residuals(u: Field) -> dict[str, float]:
    """
    Residuals of the x boundary conditions (one-sided second-order traces) and,
    for Dirichlet walls, of u = u_yy = 0 from extrapolated samples.
    """
    raw: Field = Field(u.grid, u.values, BCTag.UNCONSTRAINED)
    residuals: dict[str, float] = {
        "x0": _max_abs(raw.values[0]),
        "x1": _max_abs(raw.values[-1]),
        "ux_x1": _max_abs(trace(raw, 1, Side.RIGHT)),
        "uxx_x0": _max_abs(trace(raw, 2, Side.LEFT)),
    }
    residuals.update(_wall_residuals(raw))
    return residuals


def initial_time_derivative_limit(
    u0: Field, params: ModelParams, forcing: Field | None = None
) -> Field:
    """u_t0 = -Lap u0_x - u0 u0_x - c u0_x + f(0), evaluated with one-sided closures."""
    raw: Field = Field(u0.grid, u0.values, BCTag.UNCONSTRAINED)
    ux: np.ndarray = derivative(raw, Axis.X, 1).values
    if forcing is None:
        forcing = forcing_eval(params.forcing, u0.grid, 0.0, "f")
    values: np.ndarray = -op_A(raw, params.c).values - raw.values * ux + forcing.values
    return Field(u0.grid, values, BCTag.UNCONSTRAINED)


def check_compatibility(
    u0: Field, params: ModelParams, tol: float, forcing: Field | None = None
) -> CompatibilityReport:
    """
    Report the boundary residuals of the compatibility conditions for u0 and for
    the induced u_t0.

    Args:
        u0 (Field): Initial data.
        params (ModelParams): Model coefficients and forcing.
        tol (float): Tolerance every residual must meet.
        forcing (Field | None): Precomputed f(0); must live on the grid of u0.

    Returns:
        CompatibilityReport: Residuals keyed by condition and the pass flag.
    """
    if forcing is not None and forcing.grid != u0.grid:
        raise GridError("forcing and initial data live on different grids")

    ut0: Field = initial_time_derivative_limit(u0, params, forcing)
    residuals: dict[str, float] = {}
    for prefix, field in (("u0", u0), ("ut0", ut0)):
        field_residuals: dict[str, float] = boundary_residuals(field)
        field_residuals.pop("uxx_x0")
        for name, value in field_residuals.items():
            residuals[f"{prefix}_{name}"] = value

    passed: bool = all(value <= tol for value in residuals.values())
    if not passed:
        worst: str = max(residuals, key=residuals.get)
        logger.debug("compatibility fails worst on %s = %.3e", worst, residuals[worst])
    return CompatibilityReport(boundary_residuals=residuals, passed=passed, tolerance=tol)

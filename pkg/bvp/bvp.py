"""
Two-point problem u_xxx + u u_x + eps u_xxxx = g on (0, 1) with
u(0) = u(1) = u_x(1) = 0 and, for eps > 0, u_xx(0) = 0.

The discrete problem is solved in mixed form. w = u_xx solves
eps w_xx + w_x = g with an exponentially fitted three-point scheme, which
reproduces 1, x and exp(-x/eps) at the nodes and turns into the right-biased
first difference as eps -> 0. u solves the centred D2 u = w with
u(0) = u(1) = 0; the free constant of w is fixed by the one-sided row
u_x(1) = 0. Every solve is banded.
"""

import logging
import math
from collections.abc import Sequence

import numpy as np
import sympy as sp
from pydantic import BaseModel, ConfigDict, field_validator
from scipy.integrate import cumulative_simpson
from scipy.linalg import LinAlgError, solve_banded

from models.core import Closure
from models.errors import NumericalFaultError
from models.records import BVPSolution, SweepRecord
from operators.stencils import x_derivative_matrix
from zk.presets import BVP_SOURCES, X

logger = logging.getLogger(__name__)

MIN_POINTS: int = 16

# Picard iteration of the nonlinear variant
PICARD_RELAXATION: float = 0.5
PICARD_MAX_ITERATIONS: int = 200
PICARD_TOLERANCE: float = 1e-10

# Third-order one-sided u_x(1) row, times 6h, on nodes N, N-1, N-2, N-3
RIGHT_SLOPE_ROW: tuple[float, float, float, float] = (11.0, -18.0, 9.0, -2.0)

# Layer fit keeps nodes where |u_xx - u0_xx| stays above this fraction of its wall value
LAYER_FIT_FLOOR: float = 1e-3

# Beyond this mesh Peclet number exp() overflows and the fitted scheme is pure upwind
MAX_MESH_PECLET: float = 700.0


class BVPProblem(BaseModel):
    """Samples of g at x_k = k/N, k = 0..N, and the regularization."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    g: np.ndarray
    epsilon: float = 0.0
    nonlinear: bool = False

    @field_validator("g")
    @classmethod
    def check_samples(cls, g: np.ndarray) -> np.ndarray:
        g = np.asarray(g, dtype=float)
        if g.ndim != 1 or g.size - 1 < MIN_POINTS:
            raise ValueError(f"g needs N + 1 samples with N >= {MIN_POINTS}")
        if not np.all(np.isfinite(g)):
            raise ValueError("g must be finite")
        return g

    @field_validator("epsilon")
    @classmethod
    def check_epsilon(cls, epsilon: float) -> float:
        if epsilon < 0.0:
            raise ValueError("epsilon must be non-negative")
        return epsilon

    @property
    def n(self) -> int:
        return self.g.size - 1


def sample_source(name: str, coefficients: Sequence[float], n: int) -> np.ndarray:
    """g at the nodes k/n for a named source preset."""
    if name not in BVP_SOURCES:
        raise ValueError(f"unknown bvp source {name!r}")
    expr: sp.Expr = BVP_SOURCES[name].build(tuple(coefficients), sp.Integer(1))
    x: np.ndarray = np.arange(n + 1) / n
    return np.array(np.broadcast_to(sp.lambdify(X, expr, "numpy")(x), x.shape), dtype=float)


def _fitted_weights(epsilon: float, h: float) -> tuple[float, float]:
    """(coth(Pe/2), source blend) of the fitted scheme, Pe = h / eps; (1, 1) at eps = 0."""
    if epsilon == 0.0:
        return 1.0, 1.0
    peclet: float = h / epsilon
    if peclet > MAX_MESH_PECLET:
        return 1.0, 1.0 - 2.0 / peclet
    coth_half: float = 1.0 + 2.0 / math.expm1(peclet)
    return coth_half, coth_half - 2.0 / peclet


def _banded(solve_for: str, ab: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        return solve_banded((1, 1), ab, rhs)
    except (LinAlgError, ValueError) as exc:
        raise NumericalFaultError(f"discretization fault: singular {solve_for} system") from exc


def _curvature(g: np.ndarray, epsilon: float) -> tuple[np.ndarray, np.ndarray]:
    """
    Particular and homogeneous w on nodes 0..N-1.

    Returns:
        tuple: (w with w_{N-1} = 0, w for g = 0 with w_{N-1} = 1).
    """
    n: int = g.size - 1
    h: float = 1.0 / n
    coth_half, blend = _fitted_weights(epsilon, h)

    # rows scaled by h
    ab: np.ndarray = np.zeros((3, n))
    rhs: np.ndarray = np.zeros((n, 2))
    rows: np.ndarray = np.arange(0 if epsilon == 0.0 else 1, n - 1)
    ab[1, rows] = -coth_half
    ab[0, rows + 1] = 0.5 * (coth_half + 1.0)
    lower_rows: np.ndarray = rows[rows > 0]
    ab[2, lower_rows - 1] = 0.5 * (coth_half - 1.0)
    rhs[rows, 0] = h * (g[rows] + 0.5 * blend * (g[rows + 1] - g[rows]))
    if epsilon > 0.0:
        ab[1, 0] = 1.0
    ab[1, n - 1] = 1.0
    rhs[n - 1, 1] = 1.0
    solution: np.ndarray = _banded("curvature", ab, rhs)
    return solution[:, 0], solution[:, 1]


def _integrate_twice(w: np.ndarray) -> np.ndarray:
    """u with D2 u = w at the interior nodes and u(0) = u(1) = 0, for every column of w."""
    n: int = w.shape[0]
    h: float = 1.0 / n
    ab: np.ndarray = np.zeros((3, n - 1))
    ab[0, :] = 1.0
    ab[1, :] = -2.0
    ab[2, :] = 1.0
    u: np.ndarray = np.zeros((n + 1,) + w.shape[1:])
    u[1:-1] = _banded("second difference", ab, h**2 * w[1:])
    return u


def _slope_at_one(u: np.ndarray) -> np.ndarray:
    weights: np.ndarray = np.asarray(RIGHT_SLOPE_ROW)
    return np.tensordot(weights, u[-1:-5:-1], axes=(0, 0))


def _linear_solve(g: np.ndarray, epsilon: float) -> tuple[np.ndarray, np.ndarray]:
    w_particular, w_homogeneous = _curvature(g, epsilon)
    u: np.ndarray = _integrate_twice(np.stack([w_particular, w_homogeneous], axis=1))
    slopes: np.ndarray = _slope_at_one(u)
    if slopes[1] == 0.0:
        raise NumericalFaultError("discretization fault: u_x(1) row is degenerate")
    alpha: float = -float(slopes[0]) / float(slopes[1])
    return u[:, 0] + alpha * u[:, 1], w_particular + alpha * w_homogeneous


def _boundary(values: np.ndarray, order: int, row: int) -> float:
    matrix = x_derivative_matrix(values.size - 1, order, Closure.INTERIOR_ONLY)
    return float((matrix[row] @ values)[0])


def _solution(
    epsilon: float, x: np.ndarray, u: np.ndarray, w: np.ndarray, iterations: int
) -> BVPSolution:
    n: int = u.size - 1
    uxx: np.ndarray = np.append(w, _boundary(u, 2, n))
    return BVPSolution(
        epsilon=epsilon,
        x=x,
        u=u,
        uxx=uxx,
        ux0=_boundary(u, 1, 0),
        ux1=_boundary(u, 1, n),
        uxx0=float(w[0]),
        uxx1=float(uxx[-1]),
        uxxx1=_boundary(u, 3, n),
        sup_uxx=float(np.max(np.abs(uxx))),
        iterations=iterations,
    )


def solve_bvp(problem: BVPProblem) -> BVPSolution:
    """
    Solve the two-point problem; the nonlinear variant by relaxed Picard iteration.

    Args:
        problem (BVPProblem): Samples of g, eps and the nonlinearity switch.

    Returns:
        BVPSolution: Nodal u and u_xx with the boundary traces.
    """
    g: np.ndarray = problem.g
    n: int = problem.n
    x: np.ndarray = np.arange(n + 1) / n
    u, w = _linear_solve(g, problem.epsilon)
    if not problem.nonlinear:
        return _solution(problem.epsilon, x, u, w, 0)

    slope = x_derivative_matrix(n, 1, Closure.INTERIOR_ONLY)
    for iteration in range(1, PICARD_MAX_ITERATIONS + 1):
        candidate, candidate_w = _linear_solve(g - u * (slope @ u), problem.epsilon)
        update: np.ndarray = (1.0 - PICARD_RELAXATION) * u + PICARD_RELAXATION * candidate
        w = (1.0 - PICARD_RELAXATION) * w + PICARD_RELAXATION * candidate_w
        increment: float = float(np.max(np.abs(update - u)))
        u = update
        if not np.all(np.isfinite(u)):
            raise NumericalFaultError("Picard iteration produced non-finite values")
        if increment < PICARD_TOLERANCE:
            logger.debug("Picard converged in %d iterations (eps = %g)", iteration, problem.epsilon)
            return _solution(problem.epsilon, x, u, w, iteration)
    raise NumericalFaultError(
        f"Picard iteration did not converge in {PICARD_MAX_ITERATIONS} iterations "
        f"(eps = {problem.epsilon:g})"
    )


def limit_solution(g: np.ndarray, n: int) -> BVPSolution:
    """
    u_xxx = g with u(0) = u(1) = u_x(1) = 0 by triple integration.

    U is the triple integral of g from 0; u = U + a x^2 + b x with
    a = U(1) - U'(1) and b = U'(1) - 2 U(1).
    """
    g = np.asarray(g, dtype=float)
    if g.size != n + 1:
        raise ValueError(f"expected {n + 1} samples of g, got {g.size}")
    x: np.ndarray = np.arange(n + 1) / n
    second: np.ndarray = cumulative_simpson(g, x=x, initial=0.0)
    first: np.ndarray = cumulative_simpson(second, x=x, initial=0.0)
    base: np.ndarray = cumulative_simpson(first, x=x, initial=0.0)

    a: float = float(base[-1] - first[-1])
    b: float = float(first[-1] - 2.0 * base[-1])
    u: np.ndarray = base + a * x**2 + b * x
    uxx: np.ndarray = second + 2.0 * a
    return BVPSolution(
        epsilon=0.0,
        x=x,
        u=u,
        uxx=uxx,
        ux0=b,
        ux1=float(first[-1] + 2.0 * a + b),
        uxx0=float(uxx[0]),
        uxx1=float(uxx[-1]),
        uxxx1=float(g[-1]),
        sup_uxx=float(np.max(np.abs(uxx))),
    )


def layer_width(solution: BVPSolution, limit: BVPSolution, cutoff: float) -> float:
    """
    Decay length of |u_xx - u0_xx| next to x = 0 from a log-linear fit.

    Returns the mesh size when fewer than two nodes carry the layer.
    """
    x: np.ndarray = solution.x
    gap: np.ndarray = np.abs(solution.uxx - limit.uxx)
    h: float = float(x[1] - x[0])
    if gap[0] == 0.0:
        return 0.0
    keep: np.ndarray = (x <= cutoff) & (gap > LAYER_FIT_FLOOR * gap[0])
    # the layer is the leading run of kept nodes
    stop: int = int(np.argmin(keep)) if not np.all(keep) else keep.size
    if stop < 2:
        return h
    slope: float = float(np.polyfit(x[:stop], np.log(gap[:stop]), 1)[0])
    return -1.0 / slope if slope < 0.0 else h


def trace_sweep(
    g: np.ndarray,
    eps_list: Sequence[float],
    n: int,
    nonlinear: bool = False,
    layer_cutoff: float = 0.1,
) -> tuple[list[SweepRecord], float]:
    """
    Solve for each eps and compare with the eps = 0 solve.

    Args:
        g (np.ndarray): Samples of g at k/n.
        eps_list (Sequence[float]): Strictly decreasing, positive.
        n (int): Number of cells.
        nonlinear (bool): Include u u_x.
        layer_cutoff (float): Left end of the region the outer error is measured on.

    Returns:
        tuple: One SweepRecord per eps, and max sup|u_xx| / min sup|u_xx| over the sweep.
    """
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be strictly decreasing")
    if any(eps <= 0.0 for eps in eps_list):
        raise ValueError("eps_list must be positive")

    limit: BVPSolution = solve_bvp(BVPProblem(g=g, epsilon=0.0, nonlinear=nonlinear))
    outside: np.ndarray = limit.x >= layer_cutoff
    records: list[SweepRecord] = []
    for epsilon in eps_list:
        solution: BVPSolution = solve_bvp(BVPProblem(g=g, epsilon=epsilon, nonlinear=nonlinear))
        records.append(
            SweepRecord(
                epsilon=epsilon,
                sup_uxx=solution.sup_uxx,
                err_outside_layer=float(np.max(np.abs(solution.u - limit.u)[outside])),
                layer_width=layer_width(solution, limit, layer_cutoff),
                ux0=solution.ux0,
                uxx1=solution.uxx1,
                uxxx1=solution.uxxx1,
            )
        )
        logger.info(
            "eps = %g: sup|u_xx| = %.6g, outer error %.3e",
            epsilon,
            solution.sup_uxx,
            records[-1].err_outside_layer,
        )

    sups: list[float] = [r.sup_uxx for r in records]
    ratio: float = max(sups) / min(sups) if min(sups) > 0.0 else (1.0 if max(sups) == 0.0 else math.inf)
    return records, ratio

"""
Discrete differential operators, the operators A and L of the regularized
equation, the split nonlinearity and the weighted quadrature rule.
"""

from enum import Enum

import numpy as np

from models.core import BCTag, Closure, Field, Grid
from operators.spectral import transverse_derivative
from operators.stencils import apply_x, x_derivative_matrix


class Axis(str, Enum):
    X = "x"
    Y = "y"
    Z = "z"


class Weight(str, Enum):
    ONE = "one"
    X = "x"
    ONE_PLUS_X = "one_plus_x"


class Side(str, Enum):
    LEFT = "left"
    RIGHT = "right"


MAX_ORDER: int = 4

# Closure matching each field tag
CLOSURE_FOR_TAG: dict[BCTag, Closure] = {
    BCTag.UNCONSTRAINED: Closure.INTERIOR_ONLY,
    BCTag.ZK_LIMIT: Closure.LIMIT_BCS,
    BCTag.ZK_REGULARIZED: Closure.REGULARIZED_BCS,
}

# Field tags able to supply the boundary conditions each closure relies on
SUPPORTED_TAGS: dict[Closure, set[BCTag]] = {
    Closure.INTERIOR_ONLY: set(BCTag),
    Closure.LIMIT_BCS: {BCTag.ZK_LIMIT, BCTag.ZK_REGULARIZED},
    Closure.REGULARIZED_BCS: {BCTag.ZK_REGULARIZED},
    Closure.ENERGY_STABLE: {BCTag.ZK_LIMIT, BCTag.ZK_REGULARIZED},
}


def closure_for(u: Field) -> Closure:
    return CLOSURE_FOR_TAG[u.bc_tag]


def _check_closure(u: Field, closure: Closure) -> None:
    if u.bc_tag not in SUPPORTED_TAGS[closure]:
        raise ValueError(
            f"closure {closure.value} needs boundary conditions a field tagged "
            f"{u.bc_tag.value} does not declare"
        )


def derivative(
    u: Field, axis: Axis | str, order: int, closure: Closure | None = None
) -> Field:
    """
    Discrete derivative of a field.

    x derivatives are finite differences with the requested closure (the closure
    matching u.bc_tag by default). Transverse derivatives are spectral and keep the
    x boundary tag of u.

    Args:
        u (Field): Field to differentiate.
        axis (Axis | str): "x", "y" or "z".
        order (int): Derivative order, 0..4.
        closure (Closure | None): x closure override.

    Returns:
        Field: The derivative.
    """
    axis = Axis(axis)
    if not 0 <= order <= MAX_ORDER:
        raise ValueError(f"derivative order {order} is not supported (max {MAX_ORDER})")
    if axis == Axis.Z and u.grid.d == 1:
        raise ValueError("axis z is not available when d = 1")
    if order == 0:
        return u.copy()

    if axis == Axis.X:
        closure = closure_for(u) if closure is None else Closure(closure)
        _check_closure(u, closure)
        matrix = x_derivative_matrix(u.grid.nx, order, closure)
        return Field(u.grid, apply_x(matrix, u.values), BCTag.UNCONSTRAINED)

    array_axis: int = 1 if axis == Axis.Y else 2
    return Field(
        u.grid,
        transverse_derivative(u.grid, u.values, array_axis, order),
        u.bc_tag,
    )


def transverse_laplacian(grid: Grid, values: np.ndarray) -> np.ndarray:
    result: np.ndarray = transverse_derivative(grid, values, 1, 2)
    if grid.z is not None:
        result = result + transverse_derivative(grid, values, 2, 2)
    return result


def transverse_bilaplacian_diag(grid: Grid, values: np.ndarray) -> np.ndarray:
    """d_yyyy + d_zzzz (pure fourth derivatives only)."""
    result: np.ndarray = transverse_derivative(grid, values, 1, 4)
    if grid.z is not None:
        result = result + transverse_derivative(grid, values, 2, 4)
    return result


def op_A(u: Field, c: float, closure: Closure | None = None) -> Field:
    """A u = u_xxx + Lap_perp u_x + c u_x."""
    ux: Field = derivative(u, Axis.X, 1, closure)
    uxxx: Field = derivative(u, Axis.X, 3, closure)
    values: np.ndarray = (
        uxxx.values + transverse_laplacian(u.grid, ux.values) + c * ux.values
    )
    return Field(u.grid, values, BCTag.UNCONSTRAINED)


def op_L(u: Field, closure: Closure | None = None) -> Field:
    """L u = u_xxxx + u_yyyy + u_zzzz."""
    uxxxx: Field = derivative(u, Axis.X, 4, closure)
    values: np.ndarray = uxxxx.values + transverse_bilaplacian_diag(u.grid, u.values)
    return Field(u.grid, values, BCTag.UNCONSTRAINED)


def nonlinear_split(u: Field) -> Field:
    """
    Skew-symmetric split form of u u_x: (u D u + D(u^2)) / 3.

    With the centred first difference and u = 0 at both x boundaries, the
    trapezoid inner product (u, nonlinear_split(u)) vanishes to rounding.
    """
    matrix = x_derivative_matrix(u.grid.nx, 1, closure_for(u))
    advective: np.ndarray = u.values * apply_x(matrix, u.values)
    conservative: np.ndarray = apply_x(matrix, u.values**2)
    return Field(u.grid, (advective + conservative) / 3.0, BCTag.UNCONSTRAINED)


def weight_profile(grid: Grid, weight: Weight | str) -> np.ndarray:
    weight = Weight(weight)
    if weight == Weight.ONE:
        return np.ones_like(grid.x)
    if weight == Weight.X:
        return grid.x.copy()
    return 1.0 + grid.x


def _values(u: Field | np.ndarray) -> np.ndarray:
    return u.values if isinstance(u, Field) else np.asarray(u)


def integrate(u: Field, weight: Weight | str = Weight.ONE, grid: Grid | None = None) -> float:
    """
    Quadrature of w(x) u over M: trapezoid in x, midpoint/rectangle rule in the
    transverse directions (exact for the transverse basis).

    Args:
        u (Field): Integrand, or a raw array shaped like the grid when grid is given.
        weight (Weight | str): "one", "x" or "one_plus_x".
        grid (Grid | None): Needed only when u is a raw array.

    Returns:
        float: The weighted integral.
    """
    weight = Weight(weight)
    grid = u.grid if isinstance(u, Field) else grid
    if grid is None:
        raise ValueError("a grid is required to integrate a raw array")
    if weight == Weight.ONE_PLUS_X:
        return integrate(u, Weight.ONE, grid) + integrate(u, Weight.X, grid)
    profile: np.ndarray = grid.x_profile(weight_profile(grid, weight))
    return float(np.sum(grid.weights * profile * _values(u)))


def inner(
    u: Field | np.ndarray,
    v: Field | np.ndarray,
    weight: Weight | str = Weight.ONE,
    grid: Grid | None = None,
) -> float:
    grid = grid or (u.grid if isinstance(u, Field) else getattr(v, "grid", None))
    return integrate(_values(u) * _values(v), weight, grid)


def norm(u: Field | np.ndarray, weight: Weight | str = Weight.ONE, grid: Grid | None = None) -> float:
    return float(np.sqrt(max(inner(u, u, weight, grid), 0.0)))


def transverse_norm(grid: Grid, line: np.ndarray) -> float:
    """L2(I_perp) norm of a function of the transverse variables only."""
    return float(np.sqrt(np.sum(grid.transverse_weights * line**2)))


def trace(u: Field, order: int, side: Side | str) -> np.ndarray:
    """
    Boundary value of an x-derivative using the one-sided second-order closures.

    Returns:
        np.ndarray: Values over the transverse points.
    """
    side = Side(side)
    matrix = x_derivative_matrix(u.grid.nx, order, Closure.INTERIOR_ONLY)
    row: int = 0 if side == Side.LEFT else u.grid.nx
    flat: np.ndarray = u.values.reshape(u.values.shape[0], -1)
    line: np.ndarray = np.asarray(matrix[row] @ flat).ravel()
    return line.reshape(u.values.shape[1:])


def transverse_gradient_sq(u: Field) -> float:
    """|grad_perp u|^2 as -(u, Lap_perp u), the form the spectral Laplacian makes exact."""
    return max(-inner(u.values, transverse_laplacian(u.grid, u.values), grid=u.grid), 0.0)


def gradient_sq(u: Field) -> float:
    ux: Field = derivative(u, Axis.X, 1)
    return inner(ux, ux) + transverse_gradient_sq(u)

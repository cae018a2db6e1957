"""
Finite-difference stencils in x and the sparse derivative matrices built from them.

Boundary conditions enter through one ghost node per side, eliminated from the
stencils by polynomial extrapolation from the boundary node inward. The
evaluation closures extrapolate with degree five, pinning u_x(1) = 0 on the
right and u_xx(0) = 0 on the left, so every centred row stays second order.
The energy-stable closure keeps the short reflections u_{-1} = 2u_0 - u_1 and
u_{N+1} = u_{N-1}: with them the third difference is dissipative and the fourth
difference is |D2 u|^2 in the trapezoid inner product.

A stencil is centred whenever it fits on the real nodes plus the ghosts the
closure provides; otherwise the nearest one-sided window of order + 2 real
nodes is used (second order).
"""

from functools import lru_cache
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
from sympy import Integer, Matrix, finite_diff_weights

from models.core import Closure

# Half-width of the centred stencil for each derivative order
CENTRED_HALF_WIDTH: dict[int, int] = {1: 1, 2: 1, 3: 2, 4: 2}


class GhostRule(NamedTuple):
    """
    Extrapolation to the ghost node from `points` nodes, boundary node first.

    The polynomial is exact through degree points - 1, or through degree points
    when the derivative of order `vanishing` is pinned to zero at the boundary.
    """

    points: int
    vanishing: int | None = None


# (left, right) ghost rules of each closure; None leaves that side one-sided
GHOST_RULES: dict[Closure, tuple[GhostRule | None, GhostRule | None]] = {
    Closure.INTERIOR_ONLY: (None, None),
    Closure.LIMIT_BCS: (None, GhostRule(points=5, vanishing=1)),
    Closure.REGULARIZED_BCS: (GhostRule(points=5, vanishing=2), GhostRule(points=5, vanishing=1)),
    Closure.ENERGY_STABLE: (GhostRule(points=2), GhostRule(points=2, vanishing=1)),
}


@lru_cache(maxsize=None)
def fd_weights(offsets: tuple[int, ...], order: int) -> tuple[float, ...]:
    """
    Exact finite-difference weights for the derivative of the given order at offset 0.

    Args:
        offsets (tuple[int, ...]): Node offsets in units of h.
        order (int): Derivative order.

    Returns:
        tuple[float, ...]: Weights to be divided by h**order.
    """
    weights = finite_diff_weights(order, [Integer(o) for o in offsets], 0)
    return tuple(float(w) for w in weights[order][-1])


@lru_cache(maxsize=None)
def ghost_weights(rule: GhostRule) -> tuple[float, ...]:
    """
    Weights of the boundary node and the next points - 1 nodes inward that give
    the ghost value one cell outside the boundary.

    Measured outward from the boundary node the nodes sit at s = 0, -1, -2, ...
    and the ghost at s = 1; the weights reproduce p(1) for every monomial s^k
    the rule keeps. A pinned derivative condition is homogeneous, so the same
    weights serve both ends.
    """
    powers: list[int] = [k for k in range(rule.points + 1) if k != rule.vanishing]
    powers = powers[: rule.points]
    system = Matrix([[Integer(-m) ** k for m in range(rule.points)] for k in powers])
    solution = system.solve(Matrix([Integer(1)] * rule.points))
    return tuple(float(w) for w in solution)


def node_range(nx: int, closure: Closure) -> tuple[int, int]:
    """Lowest and highest node index, ghosts included, a centred stencil may touch."""
    left, right = GHOST_RULES[Closure(closure)]
    return (0 if left is None else -1), (nx if right is None else nx + 1)


def stencil_offsets(i: int, nx: int, order: int, closure: Closure) -> tuple[int, ...]:
    """Offsets used at node i for the given closure."""
    half: int = CENTRED_HALF_WIDTH[order]
    lowest, highest = node_range(nx, closure)
    if i - half >= lowest and i + half <= highest:
        return tuple(range(-half, half + 1))
    points: int = order + 2
    start: int = min(max(i - half, 0), nx + 1 - points)
    return tuple(range(start - i, start - i + points))


def _fold_ghost(j: int, nx: int, closure: Closure) -> list[tuple[int, float]]:
    left, right = GHOST_RULES[closure]
    if j == -1 and left is not None:
        return [(m, w) for m, w in enumerate(ghost_weights(left))]
    if j == nx + 1 and right is not None:
        return [(nx - m, w) for m, w in enumerate(ghost_weights(right))]
    return [(j, 1.0)]


@lru_cache(maxsize=64)
def x_derivative_matrix(nx: int, order: int, closure: Closure) -> sp.csr_matrix:
    """
    Sparse (nx+1)x(nx+1) matrix of the x-derivative of the given order.

    Args:
        nx (int): Number of x cells.
        order (int): Derivative order in 1..4.
        closure (Closure): Which ghost closures are available.

    Returns:
        sp.csr_matrix: The derivative matrix, already scaled by 1/h**order.
    """
    closure = Closure(closure)
    h: float = 1.0 / nx
    scale: float = h**-order
    rows: list[int] = []
    cols: list[int] = []
    vals: list[float] = []
    for i in range(nx + 1):
        offsets: tuple[int, ...] = stencil_offsets(i, nx, order, closure)
        for offset, weight in zip(offsets, fd_weights(offsets, order)):
            if weight == 0.0:
                continue
            for col, factor in _fold_ghost(i + offset, nx, closure):
                if factor == 0.0:
                    continue
                rows.append(i)
                cols.append(col)
                vals.append(weight * factor * scale)
    matrix = sp.coo_matrix((vals, (rows, cols)), shape=(nx + 1, nx + 1)).tocsr()
    matrix.sum_duplicates()
    return matrix


def apply_x(matrix: sp.spmatrix, values: np.ndarray) -> np.ndarray:
    """Apply an x-matrix to every transverse line of an array shaped (nx+1, ...)."""
    flat: np.ndarray = values.reshape(values.shape[0], -1)
    return np.asarray(matrix @ flat).reshape(values.shape)

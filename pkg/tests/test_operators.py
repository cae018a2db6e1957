import math
from typing import Callable

import numpy as np
import pytest

from geometry.geometry import make_grid, sample
from models.core import BCTag, Closure, Field, Grid, GridSpec, TransverseBC
from operators.operators import (
    Axis,
    Side,
    Weight,
    derivative,
    inner,
    integrate,
    nonlinear_split,
    norm,
    op_A,
    op_L,
    trace,
    transverse_norm,
)
from operators.spectral import from_modes, mode_eigenvalues, to_modes
from operators.stencils import (
    GhostRule,
    fd_weights,
    ghost_weights,
    stencil_offsets,
    x_derivative_matrix,
)

NX: int = 16
GRID: Grid = make_grid(GridSpec(d=1, nx=32, ny=8))
X_NODES: np.ndarray = np.arange(NX + 1) / NX


def test_fd_weights_centred_second_derivative():
    """The three-point second difference."""
    assert fd_weights((-1, 0, 1), 2) == pytest.approx((1.0, -2.0, 1.0))


def test_stencil_offsets_shift_at_the_boundary():
    """Centred inside, one-sided windows of order + 2 nodes at the ends."""
    assert stencil_offsets(5, NX, 2, Closure.INTERIOR_ONLY) == (-1, 0, 1)
    assert stencil_offsets(0, NX, 2, Closure.INTERIOR_ONLY) == (0, 1, 2, 3)
    assert stencil_offsets(NX, NX, 1, Closure.INTERIOR_ONLY) == (-2, -1, 0)
    assert stencil_offsets(0, NX, 2, Closure.REGULARIZED_BCS) == (-1, 0, 1)


@pytest.mark.parametrize(
    "order,power",
    [(1, 2), (2, 3), (3, 4), (4, 5)],
)
def test_one_sided_matrices_are_exact_on_low_degree_polynomials(order: int, power: int):
    """Every row of the interior_only matrices differentiates x^power exactly."""
    matrix = x_derivative_matrix(NX, order, Closure.INTERIOR_ONLY)
    exact: np.ndarray = math.perm(power, order) * X_NODES ** (power - order)
    assert np.allclose(matrix @ X_NODES**power, exact, rtol=1e-8, atol=1e-6)


def test_energy_stable_closure_folds_the_left_ghost():
    """With u_{-1} = 2 u_0 - u_1 the second difference at x = 0 is identically zero."""
    matrix = x_derivative_matrix(NX, 2, Closure.ENERGY_STABLE)
    assert np.all(matrix.toarray()[0] == 0.0)


def test_energy_stable_closure_folds_the_right_ghost():
    """With u_{N+1} = u_{N-1} the centred first difference at x = 1 is identically zero."""
    matrix = x_derivative_matrix(NX, 1, Closure.ENERGY_STABLE)
    assert np.all(matrix.toarray()[-1] == 0.0)


def test_derivative_argument_errors():
    """Order above four and z on a one-dimensional cross-section are rejected."""
    field: Field = Field.zeros(GRID)
    with pytest.raises(ValueError):
        derivative(field, Axis.X, 5)
    with pytest.raises(ValueError):
        derivative(field, Axis.Z, 1)


def test_closure_must_match_the_field_tag():
    """An unconstrained field cannot be differentiated with the regularized closure."""
    with pytest.raises(ValueError):
        derivative(Field.zeros(GRID), Axis.X, 2, Closure.REGULARIZED_BCS)


def test_transverse_second_derivative_of_the_first_sine_mode():
    """cos(y) is the first Dirichlet mode, so its spectral y derivatives are exact."""
    field: Field = sample(GRID, lambda x, y: (1.0 + x) * np.cos(y))
    second: Field = derivative(field, Axis.Y, 2)
    fourth: Field = derivative(field, Axis.Y, 4)
    assert np.allclose(second.values, -field.values, atol=1e-12)
    assert np.allclose(fourth.values, field.values, atol=1e-12)


def test_periodic_transverse_derivative():
    """cos(2y) has period pi; its second derivative is -4 cos(2y)."""
    grid: Grid = make_grid(GridSpec(d=1, nx=16, ny=8, transverse_bc=TransverseBC.PERIODIC))
    field: Field = sample(grid, lambda x, y: x * np.cos(2 * y))
    assert np.allclose(derivative(field, Axis.Y, 2).values, -4.0 * field.values, atol=1e-12)


def test_modes_round_trip_and_symbols():
    """to_modes / from_modes invert each other and the first Dirichlet symbol is (1, 1)."""
    rng: np.random.Generator = np.random.default_rng(7)
    values: np.ndarray = rng.standard_normal(GRID.shape)
    assert np.allclose(from_modes(GRID, to_modes(GRID, values)), values, atol=1e-12)
    kappa2, kappa4 = mode_eigenvalues(GRID)
    assert kappa2[0] == 1.0 and kappa4[0] == 1.0
    assert kappa2[2] == 9.0 and kappa4[2] == 81.0


def test_integrate_weights():
    """Trapezoid in x is exact for constants and x; the measure is pi."""
    ones: Field = Field(GRID, np.ones(GRID.shape))
    assert integrate(ones) == pytest.approx(math.pi, rel=1e-14)
    assert integrate(ones, Weight.X) == pytest.approx(math.pi / 2, rel=1e-14)
    assert integrate(ones, Weight.ONE_PLUS_X) == pytest.approx(1.5 * math.pi, rel=1e-14)
    assert norm(ones) == pytest.approx(math.sqrt(math.pi), rel=1e-14)


def test_integrate_raw_arrays_needs_a_grid():
    """A raw array carries no grid of its own."""
    with pytest.raises(ValueError):
        integrate(np.ones(GRID.shape))


def test_split_nonlinearity_is_skew():
    """(u, N(u)) vanishes for any u with u = 0 at x = 0 and x = 1."""
    rng: np.random.Generator = np.random.default_rng(11)
    values: np.ndarray = rng.standard_normal(GRID.shape)
    values[0] = 0.0
    values[-1] = 0.0
    for tag in (BCTag.ZK_REGULARIZED, BCTag.ZK_LIMIT):
        u: Field = Field(GRID, values, tag)
        assert abs(inner(u, nonlinear_split(u))) < 1e-10


def test_traces_of_a_quadratic():
    """u = x^2 cos(y): u_x(0) = 0, u_x(1) = 2 cos(y), u_xx(1) = 2 cos(y), exactly."""
    field: Field = sample(GRID, lambda x, y: x**2 * np.cos(y))
    cosine: np.ndarray = np.cos(GRID.y.points)
    assert np.allclose(trace(field, 1, Side.LEFT), 0.0, atol=1e-12)
    assert np.allclose(trace(field, 1, Side.RIGHT), 2.0 * cosine, atol=1e-10)
    assert np.allclose(trace(field, 2, Side.RIGHT), 2.0 * cosine, atol=1e-9)


def quintic(x: np.ndarray) -> np.ndarray:
    """x^3 (1-x)^2: zero at both ends with u_x(1) = 0 and u_xx(0) = 0."""
    return x**3 * (1.0 - x) ** 2


QUINTIC_DERIVATIVES: dict[int, Callable[[np.ndarray], np.ndarray]] = {
    1: lambda x: 3 * x**2 - 8 * x**3 + 5 * x**4,
    2: lambda x: 6 * x - 24 * x**2 + 20 * x**3,
    3: lambda x: 6 - 48 * x + 60 * x**2,
    4: lambda x: -48 + 120 * x,
}


def quintic_field(nx: int, tag: BCTag) -> Field:
    grid: Grid = make_grid(GridSpec(d=1, nx=nx, ny=8))
    field: Field = sample(grid, lambda x, y: quintic(x) * np.cos(y))
    return field.with_values(field.values, tag)


def exact_on(field: Field, profile: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    return sample(field.grid, lambda x, y: profile(x) * np.cos(y)).values


def test_ghost_weights_of_the_reflections():
    """Two-point rules: u_{-1} = 2 u_0 - u_1, and u_{N+1} = u_{N-1} once u_x is pinned."""
    assert ghost_weights(GhostRule(points=2)) == pytest.approx((2.0, -1.0))
    assert ghost_weights(GhostRule(points=2, vanishing=1)) == pytest.approx((1.0, 0.0))


@pytest.mark.parametrize("tag", [BCTag.ZK_REGULARIZED, BCTag.ZK_LIMIT])
@pytest.mark.parametrize("order", [1, 2, 3])
def test_x_derivatives_refine_at_second_order_on_every_node(order: int, tag: BCTag):
    """The max error over the whole grid, boundary rows included, drops about 4x per halving of h."""
    errors: list[float] = []
    for nx in (32, 64, 128):
        u: Field = quintic_field(nx, tag)
        approx: Field = derivative(u, Axis.X, order)
        errors.append(float(np.max(np.abs(approx.values - exact_on(u, QUINTIC_DERIVATIVES[order])))))
    assert errors[0] / errors[1] > 3.5
    assert errors[1] / errors[2] > 3.5


@pytest.mark.parametrize("tag", [BCTag.ZK_REGULARIZED, BCTag.ZK_LIMIT])
def test_fourth_difference_is_exact_on_the_quintic(tag: BCTag):
    """Every row of D4, the ghost-folded ones included, is exact through degree five."""
    u: Field = quintic_field(32, tag)
    approx: Field = derivative(u, Axis.X, 4)
    assert np.allclose(approx.values, exact_on(u, QUINTIC_DERIVATIVES[4]), atol=1e-6)


def test_op_A_on_the_quintic():
    """A u = (u''' + (c - 1) u') cos y for u = quintic(x) cos y, refining at second order."""
    c: float = 2.0
    errors: list[float] = []
    for nx in (32, 64, 128):
        u: Field = quintic_field(nx, BCTag.ZK_REGULARIZED)
        exact: np.ndarray = exact_on(
            u, lambda x: QUINTIC_DERIVATIVES[3](x) + (c - 1.0) * QUINTIC_DERIVATIVES[1](x)
        )
        errors.append(float(np.max(np.abs(op_A(u, c).values - exact))))
    assert errors[0] / errors[1] > 3.5
    assert errors[1] / errors[2] > 3.5


def test_op_L_on_the_quintic():
    """L u = (u'''' + u) cos y exactly: D4 is exact on quintics and cos y is a sine mode."""
    u: Field = quintic_field(32, BCTag.ZK_REGULARIZED)
    exact: np.ndarray = exact_on(u, lambda x: QUINTIC_DERIVATIVES[4](x) + quintic(x))
    assert np.allclose(op_L(u).values, exact, atol=1e-6)


def test_x_and_transverse_derivatives_commute():
    """Finite differences act along x and the spectral transform along y, so the order is immaterial."""
    rng: np.random.Generator = np.random.default_rng(3)
    u: Field = Field(GRID, rng.standard_normal(GRID.shape), BCTag.ZK_REGULARIZED)
    first: Field = derivative(derivative(u, Axis.Y, 2), Axis.X, 1)
    second: Field = derivative(derivative(u, Axis.X, 1), Axis.Y, 2)
    assert np.allclose(first.values, second.values, atol=1e-9)


def test_split_nonlinearity_is_second_order():
    """(u D u + D(u^2)) / 3 approaches u u_x at O(h^2) over the whole grid."""
    errors: list[float] = []
    for nx in (32, 64, 128):
        u: Field = quintic_field(nx, BCTag.ZK_REGULARIZED)
        exact: np.ndarray = u.values * exact_on(u, QUINTIC_DERIVATIVES[1])
        errors.append(float(np.max(np.abs(nonlinear_split(u).values - exact))))
    assert errors[0] / errors[1] > 3.5
    assert errors[1] / errors[2] > 3.5


def random_boundary_field(seed: int, tag: BCTag) -> Field:
    rng: np.random.Generator = np.random.default_rng(seed)
    values: np.ndarray = rng.standard_normal(GRID.shape)
    values[0] = 0.0
    values[-1] = 0.0
    return Field(GRID, values, tag)


@pytest.mark.parametrize("tag", [BCTag.ZK_REGULARIZED, BCTag.ZK_LIMIT])
def test_energy_stable_third_difference_is_dissipative(tag: BCTag):
    """(v, D3 v) = (|v_1|^2 + |v_{N-1}|^2) / (2 h^2) for any v vanishing at both ends."""
    v: Field = random_boundary_field(19, tag)
    h: float = 1.0 / GRID.nx
    d3v: Field = derivative(v, Axis.X, 3, Closure.ENERGY_STABLE)
    expected: float = (
        transverse_norm(GRID, v.values[1]) ** 2 + transverse_norm(GRID, v.values[-2]) ** 2
    ) / (2.0 * h**2)
    assert inner(v, d3v) == pytest.approx(expected, rel=1e-10)
    assert expected > 0.0


@pytest.mark.parametrize("tag", [BCTag.ZK_REGULARIZED, BCTag.ZK_LIMIT])
def test_energy_stable_fourth_difference_is_a_square(tag: BCTag):
    """(v, D4 v) = |D2 v|^2 in the trapezoid inner product."""
    v: Field = random_boundary_field(23, tag)
    d4v: Field = derivative(v, Axis.X, 4, Closure.ENERGY_STABLE)
    d2v: Field = derivative(v, Axis.X, 2, Closure.ENERGY_STABLE)
    assert inner(v, d4v) == pytest.approx(norm(d2v) ** 2, rel=1e-10)

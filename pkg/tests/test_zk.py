import numpy as np
import pytest
import sympy as sp

from geometry.geometry import make_grid
from models.core import BCTag, Field, Grid, GridSpec
from models.errors import ConfigError, NumericalFaultError
from models.params import ForcingKind, ForcingSpec, InitialSpec, ModelParams
from operators.operators import norm, op_L
from zk.presets import BUMP, T, X, Y
from zk.zk import (
    ManufacturedSolution,
    forcing_eval,
    initial_condition,
    manufactured_forcing,
    rhs,
    zk_residual_expr,
)

GRID: Grid = make_grid(GridSpec(d=1, nx=32, ny=8))
LINEAR: ModelParams = ModelParams(c=1.0, epsilon=0.0, nonlinear=False)
REGULARIZED: ModelParams = ModelParams(c=1.0, epsilon=0.01, nonlinear=True)


def test_residual_expression_of_a_linear_profile():
    """u = x t: u_t + u_xxx + u_xyy + c u_x + u u_x = x + c t + x t^2."""
    expr: sp.Expr = zk_residual_expr(X * T, c=2.0, epsilon=0.0, nonlinear=True, d=1)
    assert sp.simplify(expr - (X + 2.0 * T + X * T**2)) == 0


def test_residual_expression_includes_the_regularization():
    """eps (u_xxxx + u_yyyy) of x^4 y^4 is 24 eps (x^4 + y^4)."""
    u: sp.Expr = X**4 * Y**4
    with_eps: sp.Expr = zk_residual_expr(u, c=1.0, epsilon=0.5, nonlinear=False, d=1)
    without: sp.Expr = zk_residual_expr(u, c=1.0, epsilon=0.0, nonlinear=False, d=1)
    assert sp.simplify(with_eps - without - 12 * (Y**4 + X**4)) == 0


def test_rhs_of_zero_is_zero():
    """With f = 0 the zero state is steady."""
    u: Field = Field.zeros(GRID, BCTag.ZK_REGULARIZED)
    assert np.all(rhs(u, 0.0, REGULARIZED).values == 0.0)


def test_rhs_needs_regularized_tag_when_eps_positive():
    """A field tagged for the limit problem cannot be used with eps > 0."""
    with pytest.raises(ValueError):
        rhs(Field.zeros(GRID, BCTag.ZK_LIMIT), 0.0, REGULARIZED)


def test_analytic_forcing_values():
    """steady [a] is a x (1 - x) cos(y) at every time."""
    spec: ForcingSpec = ForcingSpec(kind=ForcingKind.ANALYTIC, name="steady", coefficients=(3.0,))
    x, y = GRID.mesh()
    assert np.allclose(forcing_eval(spec, GRID, 0.7).values, 3.0 * x * (1 - x) * np.cos(y))
    assert np.all(forcing_eval(spec, GRID, 0.7, "f_t").values == 0.0)


def test_exp_decay_time_derivative():
    """f_t = -rate f for exp-decay [a, rate]."""
    spec: ForcingSpec = ForcingSpec(kind=ForcingKind.ANALYTIC, name="exp-decay", coefficients=(2.0, 5.0))
    f: np.ndarray = forcing_eval(spec, GRID, 0.3).values
    ft: np.ndarray = forcing_eval(spec, GRID, 0.3, "f_t").values
    assert np.allclose(ft, -5.0 * f, atol=1e-14)


def test_forcing_derivative_name_is_checked():
    """Only f and f_t can be evaluated."""
    with pytest.raises(ValueError):
        forcing_eval(ForcingSpec(), GRID, 0.0, "f_tt")


def test_manufactured_forcing_of_zero_solution_is_zero():
    """The trivial solution needs no forcing."""
    exact: ManufacturedSolution = ManufacturedSolution("zero", d=1, periodic=False)
    assert manufactured_forcing(exact, LINEAR) == ForcingSpec()


def test_manufactured_forcing_is_the_symbolic_residual():
    """The bound forcing at a point equals the residual of the exact solution there."""
    exact: ManufacturedSolution = ManufacturedSolution.for_grid("poly-exp", GRID)
    spec: ForcingSpec = manufactured_forcing(exact, REGULARIZED)
    assert spec.kind == ForcingKind.MANUFACTURED
    assert spec.model_epsilon == 0.01

    residual: sp.Expr = zk_residual_expr(exact.expr, 1.0, 0.01, True, 1)
    point: tuple[int, int] = (10, 3)
    x, y = GRID.mesh()
    expected: float = float(residual.subs({X: x[point], Y: y[point], T: 0.25}))
    assert forcing_eval(spec, GRID, 0.25).values[point] == pytest.approx(expected, rel=1e-12, abs=1e-14)


def test_manufactured_solution_time_derivative():
    """poly-exp decays like exp(-t)."""
    exact: ManufacturedSolution = ManufacturedSolution.for_grid("poly-exp", GRID)
    u: Field = exact.evaluate(GRID, 0.5)
    assert np.allclose(exact.time_derivative(GRID, 0.5).values, -u.values)
    assert u.bc_tag == BCTag.ZK_REGULARIZED


def test_initial_condition_tags_and_amplitude():
    """poly-bump scales with its amplitude and carries the model's boundary tag."""
    small: Field = initial_condition(InitialSpec(preset="poly-bump", coefficients=(1.0,)), ForcingSpec(), GRID, 0.0)
    large: Field = initial_condition(InitialSpec(preset="poly-bump", coefficients=(2.0,)), ForcingSpec(), GRID, 0.1)
    assert small.bc_tag == BCTag.ZK_LIMIT
    assert large.bc_tag == BCTag.ZK_REGULARIZED
    assert np.allclose(large.values, 2.0 * small.values)
    x, y = GRID.mesh()
    bump = sp.lambdify((X, Y), BUMP * sp.cos(Y))
    assert np.allclose(small.values, bump(x, y))


def test_manufactured_initial_condition_needs_manufactured_forcing():
    """The manufactured preset takes its shape from the forcing."""
    with pytest.raises(ConfigError, match="manufactured_initial"):
        initial_condition(InitialSpec(preset="manufactured"), ForcingSpec(), GRID, 0.0)


def test_unknown_manufactured_solution():
    """Solutions are looked up by name."""
    with pytest.raises(ValueError):
        ManufacturedSolution("gaussian", d=1, periodic=False)


def manufactured_params(epsilon: float) -> ModelParams:
    return ModelParams(
        c=1.0,
        epsilon=epsilon,
        nonlinear=True,
        forcing=ForcingSpec(
            kind=ForcingKind.MANUFACTURED,
            solution="poly-exp",
            model_c=1.0,
            model_epsilon=epsilon,
            model_nonlinear=True,
        ),
    )


@pytest.mark.parametrize(
    "epsilon,tag",
    [(0.01, BCTag.ZK_REGULARIZED), (0.0, BCTag.ZK_LIMIT)],
)
def test_rhs_of_the_exact_solution_converges_to_its_time_derivative(epsilon: float, tag: BCTag):
    """|rhs(u*) - u*_t| over the whole grid shrinks at least 3.5x per halving of h."""
    params: ModelParams = manufactured_params(epsilon)
    t: float = 0.3
    defects: list[float] = []
    for nx in (32, 64, 128):
        grid: Grid = make_grid(GridSpec(d=1, nx=nx, ny=8))
        exact: ManufacturedSolution = ManufacturedSolution.for_grid("poly-exp", grid)
        u: Field = exact.evaluate(grid, t, tag)
        defect: np.ndarray = rhs(u, t, params).values - exact.time_derivative(grid, t).values
        defects.append(norm(defect, grid=grid))
    assert defects[0] / defects[1] > 3.5
    assert defects[1] / defects[2] > 3.5


def test_rhs_is_affine_in_the_forcing():
    """rhs(u, f1 + f2) = rhs(u, f1) + f2."""
    rng: np.random.Generator = np.random.default_rng(5)
    u: Field = ManufacturedSolution.for_grid("poly-exp", GRID).evaluate(GRID, 0.0)
    f1: Field = Field(GRID, rng.standard_normal(GRID.shape))
    f2: Field = Field(GRID, rng.standard_normal(GRID.shape))
    combined: Field = rhs(u, 0.0, REGULARIZED, f1.with_values(f1.values + f2.values))
    split: np.ndarray = rhs(u, 0.0, REGULARIZED, f1).values + f2.values
    assert np.allclose(combined.values, split, atol=1e-10)


def test_rhs_regularization_enters_as_minus_eps_L():
    """rhs_eps(u) - rhs_0(u) = -eps L u for the same state and forcing."""
    u: Field = ManufacturedSolution.for_grid("poly-exp", GRID).evaluate(GRID, 0.0)
    forcing: Field = Field.zeros(GRID)
    unregularized: ModelParams = ModelParams(c=1.0, epsilon=0.0, nonlinear=True)
    difference: np.ndarray = (
        rhs(u, 0.0, REGULARIZED, forcing).values - rhs(u, 0.0, unregularized, forcing).values
    )
    assert np.allclose(difference, -0.01 * op_L(u).values, atol=1e-10)


def test_non_finite_rhs_names_the_time_and_the_state_size():
    """u u_x overflows for a huge state; the fault reports t and max|u|."""
    bump: Field = initial_condition(InitialSpec(preset="poly-bump"), ForcingSpec(), GRID, 0.01)
    huge: Field = bump.with_values(1e200 * bump.values)
    with pytest.raises(NumericalFaultError, match=r"t = 0\.5 \(max\|u\| = "):
        rhs(huge, 0.5, REGULARIZED, Field.zeros(GRID))

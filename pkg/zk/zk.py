import logging
from functools import lru_cache

import numpy as np
import sympy as sp

from models.core import BCTag, Field, Grid, TransverseBC
from models.errors import ConfigError, GridError, NumericalFaultError
from models.params import ForcingKind, ForcingSpec, InitialSpec, ModelParams
from operators.operators import nonlinear_split, op_A, op_L
from zk.presets import (
    ANALYTIC_FORCINGS,
    INITIAL_PRESETS,
    MANUFACTURED_SOLUTIONS,
    T,
    X,
    Y,
    Z,
    transverse_profile,
)

logger = logging.getLogger(__name__)


@lru_cache(maxsize=256)
def _lambdify(expr: sp.Expr):
    return sp.lambdify((X, Y, Z, T), expr, modules="numpy")


def evaluate_expr(expr: sp.Expr, grid: Grid, t: float) -> np.ndarray:
    """Values of a symbolic expression in (x, y, z, t) at the grid points and time t."""
    coords: tuple[np.ndarray, ...] = grid.mesh()
    z: np.ndarray | float = coords[2] if grid.d == 2 else 0.0
    with np.errstate(all="ignore"):
        raw = _lambdify(expr)(coords[0], coords[1], z, t)
    return np.array(np.broadcast_to(np.asarray(raw, dtype=float), grid.shape))


def _is_periodic(grid: Grid) -> bool:
    return grid.transverse_bc == TransverseBC.PERIODIC


def zk_residual_expr(
    u: sp.Expr, c: float, epsilon: float, nonlinear: bool, d: int
) -> sp.Expr:
    """u_t + Lap u_x + c u_x + u u_x + eps L u, differentiated symbolically."""
    ux: sp.Expr = sp.diff(u, X)
    lap_perp_ux: sp.Expr = sp.diff(ux, Y, 2)
    fourth: sp.Expr = sp.diff(u, X, 4) + sp.diff(u, Y, 4)
    if d == 2:
        lap_perp_ux += sp.diff(ux, Z, 2)
        fourth += sp.diff(u, Z, 4)
    expr: sp.Expr = sp.diff(u, T) + sp.diff(u, X, 3) + lap_perp_ux + c * ux
    if nonlinear:
        expr += u * ux
    if epsilon:
        expr += epsilon * fourth
    return expr


class ManufacturedSolution:
    """
    Closed-form exact solution satisfying every regularized boundary condition,
    with its derivatives available symbolically.
    """

    def __init__(self, name: str, d: int, periodic: bool) -> None:
        if name not in MANUFACTURED_SOLUTIONS:
            raise ValueError(f"unknown manufactured solution {name!r}")
        self.name: str = name
        self.d: int = d
        self.periodic: bool = periodic
        self.expr: sp.Expr = MANUFACTURED_SOLUTIONS[name](transverse_profile(d, periodic))

    @classmethod
    def for_grid(cls, name: str, grid: Grid) -> "ManufacturedSolution":
        return cls(name, grid.d, _is_periodic(grid))

    def derivative_expr(self, *variables: sp.Symbol) -> sp.Expr:
        return sp.diff(self.expr, *variables) if variables else self.expr

    def evaluate(
        self, grid: Grid, t: float, bc_tag: BCTag = BCTag.ZK_REGULARIZED
    ) -> Field:
        return Field(grid, evaluate_expr(self.expr, grid, t), bc_tag)

    def time_derivative(self, grid: Grid, t: float) -> Field:
        return Field(grid, evaluate_expr(sp.diff(self.expr, T), grid, t))


def manufactured_forcing(exact: ManufacturedSolution, params: ModelParams) -> ForcingSpec:
    """
    The forcing for which exact solves the regularized equation with params.

    Returns:
        ForcingSpec: kind zero for the trivial solution, otherwise kind manufactured
        bound to (c, epsilon, nonlinear) of params.
    """
    if exact.expr == 0:
        return ForcingSpec()
    return ForcingSpec(
        kind=ForcingKind.MANUFACTURED,
        solution=exact.name,
        model_c=params.c,
        model_epsilon=params.epsilon,
        model_nonlinear=params.nonlinear,
    )


def forcing_expr(spec: ForcingSpec, d: int, periodic: bool) -> sp.Expr:
    profile: sp.Expr = transverse_profile(d, periodic)
    if spec.kind == ForcingKind.ZERO:
        return sp.Integer(0)
    if spec.kind == ForcingKind.ANALYTIC:
        if spec.name not in ANALYTIC_FORCINGS:
            raise ValueError(f"unknown analytic forcing preset {spec.name!r}")
        return ANALYTIC_FORCINGS[spec.name].build(spec.coefficients, profile)
    if spec.model_c is None or spec.model_epsilon is None:
        raise ValueError("manufactured forcing is not bound to model coefficients")
    exact: sp.Expr = MANUFACTURED_SOLUTIONS[spec.solution](profile)
    return zk_residual_expr(
        exact, spec.model_c, spec.model_epsilon, spec.model_nonlinear, d
    )


@lru_cache(maxsize=64)
def _forcing_exprs(spec_json: str, d: int, periodic: bool) -> tuple[sp.Expr, sp.Expr]:
    spec: ForcingSpec = ForcingSpec.model_validate_json(spec_json)
    f: sp.Expr = forcing_expr(spec, d, periodic)
    return f, sp.diff(f, T)


def forcing_eval(spec: ForcingSpec, grid: Grid, t: float, derivative: str = "f") -> Field:
    """
    Pointwise values of f or f_t at time t.

    Args:
        spec (ForcingSpec): The forcing.
        grid (Grid): Grid to evaluate on.
        t (float): Time.
        derivative (str): "f" or "f_t".

    Returns:
        Field: The sampled forcing.
    """
    if derivative not in ("f", "f_t"):
        raise ValueError(f"derivative must be 'f' or 'f_t', got {derivative!r}")
    if spec.kind == ForcingKind.ZERO:
        return Field.zeros(grid)
    f, ft = _forcing_exprs(spec.model_dump_json(), grid.d, _is_periodic(grid))
    return Field(grid, evaluate_expr(f if derivative == "f" else ft, grid, t))


def initial_condition(
    initial: InitialSpec, forcing: ForcingSpec, grid: Grid, epsilon: float
) -> Field:
    """Initial data for a run, tagged with the boundary set of the model (regularized when eps > 0)."""
    tag: BCTag = BCTag.ZK_REGULARIZED if epsilon > 0.0 else BCTag.ZK_LIMIT
    if initial.preset == "manufactured":
        if forcing.kind != ForcingKind.MANUFACTURED:
            raise ConfigError(
                "initial preset 'manufactured' needs a manufactured forcing",
                rule="manufactured_initial",
            )
        exact = ManufacturedSolution.for_grid(forcing.solution, grid)
        return exact.evaluate(grid, 0.0, tag)
    profile: sp.Expr = transverse_profile(grid.d, _is_periodic(grid))
    expr: sp.Expr = INITIAL_PRESETS[initial.preset].build(initial.coefficients, profile)
    return Field(grid, evaluate_expr(expr, grid, 0.0), tag)


def rhs(
    u: Field, t: float, params: ModelParams, forcing: Field | None = None
) -> Field:
    """
    f(t) - A u - N(u) - eps L u, with N the split nonlinearity.

    Args:
        u (Field): State; must be tagged regularized when eps > 0.
        t (float): Time at which f is evaluated.
        params (ModelParams): Model coefficients.
        forcing (Field | None): Precomputed f(t).

    Returns:
        Field: The right-hand side.
    """
    if params.epsilon > 0.0 and u.bc_tag != BCTag.ZK_REGULARIZED:
        raise ValueError("epsilon > 0 needs a field tagged zk_regularized")
    if forcing is None:
        forcing = forcing_eval(params.forcing, u.grid, t, "f")

    try:
        with np.errstate(over="ignore", invalid="ignore"):
            values: np.ndarray = forcing.values - op_A(u, params.c).values
            if params.nonlinear:
                values = values - nonlinear_split(u).values
            if params.epsilon > 0.0:
                values = values - params.epsilon * op_L(u).values
            return Field(u.grid, values, BCTag.UNCONSTRAINED)
    except GridError as exc:
        raise NumericalFaultError(
            f"non-finite right-hand side at t = {t:.6g} (max|u| = {u.max_abs():.6g}): {exc}"
        ) from exc

"""
Multiplier balances evaluated along a stored trajectory.

The discrete form pairs each multiplier with the interval residual of the
scheme, split into the time, operator, nonlinear and forcing terms, so a
linear run balances to solver tolerance. The continuum form assembles the
integrated-by-parts identities from norms and traces of the states.
"""

import logging
from enum import Enum

import numpy as np

from models.core import Field, Grid
from models.params import ModelParams
from operators.operators import (
    Axis,
    Side,
    Weight,
    derivative,
    inner,
    integrate,
    nonlinear_split,
    norm,
    trace,
    transverse_gradient_sq,
    transverse_norm,
    weight_profile,
)
from stepper.stepper import SolverState, Trajectory, linear_operator_values
from zk.zk import forcing_eval

logger = logging.getLogger(__name__)

# Relative mismatch tolerated between consecutive steps of a constant-step run
CONSTANT_STEP_TOLERANCE: float = 1e-9


class BalanceKind(str, Enum):
    U = "u"
    XU = "xu"
    ONE_PX_UT = "one_px_ut"
    ONE_PX_UYY = "one_px_uyy"
    ONE_PX_UYYYY = "one_px_uyyyy"


def _consecutive(trajectory: Trajectory) -> list[SolverState]:
    states: list[SolverState] = trajectory.states
    if len(states) < 2:
        raise ValueError("a balance needs at least two consecutive states")
    for before, after in zip(states, states[1:]):
        if after.step_index != before.step_index + 1:
            raise ValueError(
                "trajectory states are not consecutive; run with keep_states='all'"
            )
    return states


def _profile(grid: Grid, weight: Weight) -> np.ndarray:
    return grid.x_profile(weight_profile(grid, weight))


def multiplier(kind: BalanceKind, u: Field) -> np.ndarray:
    """The multiplier of each balance applied to u (u_t multipliers take the difference quotient)."""
    grid: Grid = u.grid
    if kind == BalanceKind.U:
        return u.values
    if kind == BalanceKind.XU:
        return _profile(grid, Weight.X) * u.values
    if kind == BalanceKind.ONE_PX_UYY:
        return _profile(grid, Weight.ONE_PLUS_X) * derivative(u, Axis.Y, 2).values
    if kind == BalanceKind.ONE_PX_UYYYY:
        return _profile(grid, Weight.ONE_PLUS_X) * derivative(u, Axis.Y, 4).values
    return _profile(grid, Weight.ONE_PLUS_X) * u.values


def interval_terms(
    before: SolverState, after: SolverState, params: ModelParams, theta: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """
    Pieces of the scheme on one interval at the interior nodes.

    Returns:
        tuple: (du/dt, M u_theta, N(u_theta), f(t + theta dt)); boundary rows are zero.
    """
    dt: float = after.t - before.t
    u_theta: Field = before.u.with_values(
        theta * after.u.values + (1.0 - theta) * before.u.values
    )
    pieces: list[np.ndarray] = [
        (after.u.values - before.u.values) / dt,
        linear_operator_values(u_theta, params),
        nonlinear_split(u_theta).values if params.nonlinear else np.zeros(u_theta.grid.shape),
        forcing_eval(params.forcing, u_theta.grid, before.t + theta * dt).values,
    ]
    for piece in pieces:
        piece[0] = 0.0
        piece[-1] = 0.0
    return pieces[0], pieces[1], pieces[2], pieces[3]


def _discrete(trajectory: Trajectory, kind: BalanceKind) -> np.ndarray:
    states: list[SolverState] = _consecutive(trajectory)
    params: ModelParams = trajectory.params
    theta: float = trajectory.step.theta
    grid: Grid = trajectory.grid

    residuals: list[float] = []
    if kind != BalanceKind.ONE_PX_UT:
        for before, after in zip(states, states[1:]):
            mean: Field = before.u.with_values(0.5 * (before.u.values + after.u.values))
            weight: np.ndarray = multiplier(kind, mean)
            rate, linear, nonlinear, forcing = interval_terms(before, after, params, theta)
            residuals.append(
                inner(weight, rate, grid=grid)
                + inner(weight, linear, grid=grid)
                + inner(weight, nonlinear, grid=grid)
                - inner(weight, forcing, grid=grid)
            )
        return np.abs(np.asarray(residuals))

    # u_t = v: difference the scheme over two intervals of equal length
    for first, middle, last in zip(states, states[1:], states[2:]):
        dt: float = middle.t - first.t
        if abs((last.t - middle.t) - dt) > CONSTANT_STEP_TOLERANCE * dt:
            continue
        early = interval_terms(first, middle, params, theta)
        late = interval_terms(middle, last, params, theta)
        v_mean: Field = Field(grid, 0.5 * (early[0] + late[0]))
        weight = multiplier(kind, v_mean)
        rate_change: np.ndarray = (late[0] - early[0]) / dt
        linear_change: np.ndarray = (late[1] - early[1]) / dt
        nonlinear_change: np.ndarray = (late[2] - early[2]) / dt
        forcing_change: np.ndarray = (late[3] - early[3]) / dt
        residuals.append(
            inner(weight, rate_change, grid=grid)
            + inner(weight, linear_change, grid=grid)
            + inner(weight, nonlinear_change, grid=grid)
            - inner(weight, forcing_change, grid=grid)
        )
    return np.abs(np.asarray(residuals))


def _continuum_u(u: Field, f: Field, params: ModelParams) -> tuple[float, float]:
    """(1/2 |u|^2, 1/2 |u_x(0)|^2 + eps [u]_2^2 - (f, u))."""
    grid: Grid = u.grid
    energy: float = 0.5 * norm(u) ** 2
    flux: float = 0.5 * transverse_norm(grid, trace(u, 1, Side.LEFT)) ** 2
    if params.epsilon > 0.0:
        xi_sq: float = norm(derivative(u, Axis.X, 2)) ** 2 + norm(derivative(u, Axis.Y, 2)) ** 2
        if grid.d == 2:
            xi_sq += norm(derivative(u, Axis.Z, 2)) ** 2
        flux += params.epsilon * xi_sq
    return energy, flux - inner(f, u)


def _continuum_xu(u: Field, f: Field, params: ModelParams) -> tuple[float, float]:
    """(1/2 |sqrt(x) u|^2, the remaining terms of the xu identity)."""
    grid: Grid = u.grid
    energy: float = 0.5 * norm(u, Weight.X) ** 2
    ux: Field = derivative(u, Axis.X, 1)
    terms: float = (
        1.5 * norm(ux) ** 2
        + 0.5 * transverse_gradient_sq(u)
        - 0.5 * params.c * norm(u) ** 2
        - inner(f, u, Weight.X)
    )
    if params.nonlinear:
        terms -= integrate(u.values**3, grid=grid) / 3.0
    if params.epsilon > 0.0:
        weighted: float = norm(derivative(u, Axis.X, 2), Weight.X) ** 2
        weighted += norm(derivative(u, Axis.Y, 2), Weight.X) ** 2
        if grid.d == 2:
            weighted += norm(derivative(u, Axis.Z, 2), Weight.X) ** 2
        trace_sq: float = transverse_norm(grid, trace(u, 1, Side.LEFT)) ** 2
        terms += params.epsilon * (weighted - trace_sq)
    return energy, terms


def _continuum(trajectory: Trajectory, kind: BalanceKind) -> np.ndarray:
    if kind not in (BalanceKind.U, BalanceKind.XU):
        raise ValueError(f"no continuum form for balance {kind.value}")
    states: list[SolverState] = _consecutive(trajectory)
    params: ModelParams = trajectory.params
    assemble = _continuum_u if kind == BalanceKind.U else _continuum_xu

    levels: list[tuple[float, float]] = [
        assemble(state.u, forcing_eval(params.forcing, state.u.grid, state.t), params)
        for state in states
    ]
    residuals: list[float] = []
    for (before, after), (left, right) in zip(zip(states, states[1:]), zip(levels, levels[1:])):
        dt: float = after.t - before.t
        residuals.append((right[0] - left[0]) / dt + 0.5 * (left[1] + right[1]))
    return np.abs(np.asarray(residuals))


def energy_balance_residual(
    trajectory: Trajectory, kind: BalanceKind | str, form: str = "discrete"
) -> np.ndarray:
    """
    Per-interval residual of a multiplier balance along a trajectory.

    Args:
        trajectory (Trajectory): A run that kept every step.
        kind (BalanceKind | str): u, xu, one_px_ut, one_px_uyy or one_px_uyyyy.
        form (str): "discrete" (scheme operators) or "continuum" (u and xu only).

    Returns:
        np.ndarray: |residual| per interval; one_px_ut yields one entry per pair of
        equal consecutive steps.
    """
    kind = BalanceKind(kind)
    if form == "discrete":
        return _discrete(trajectory, kind)
    if form == "continuum":
        return _continuum(trajectory, kind)
    raise ValueError(f"unknown balance form {form!r}")

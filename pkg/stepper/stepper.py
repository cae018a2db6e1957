"""
IMEX time stepping: A + eps L implicit with a theta weighting, the split
nonlinearity extrapolated explicitly, one sparse factorization per distinct
transverse mode symbol.
"""

import logging
import math
from collections.abc import Callable
from typing import Literal

import numpy as np
import scipy.sparse as sp
from pydantic import BaseModel, ConfigDict
from scipy import fft
from scipy.sparse.linalg import SuperLU, splu

from diagnostics.diagnostics import initial_time_derivative, record
from geometry.geometry import check_compatibility, make_grid
from models.core import Closure, Field, Grid
from models.errors import CompatibilityError, NumericalFaultError
from models.params import ModelParams, NonlinearExtrapolation, RunConfig, StepConfig
from models.records import CompatibilityReport, DiagnosticsRecord
from operators.operators import gradient_sq, nonlinear_split, norm, op_A, op_L
from operators.spectral import from_modes, mode_eigenvalues, to_modes
from operators.stencils import x_derivative_matrix
from stepper.cache import FactorizationCache, LocalFactorizationCache, generate_cache_key
from zk.zk import forcing_eval, initial_condition

logger = logging.getLogger(__name__)

# A new dt is adopted when it is smaller, or larger by more than this factor
DT_GROWTH_HYSTERESIS: float = 1.25

# Relative slack when comparing accumulated times against t_end and record times
TIME_EPSILON: float = 1e-9

BlowupNorm = Literal["l2", "grad", "sup"]

# x closure of the advanced operator: (v, D3 v) >= 0 and (v, D4 v) = |D2 v|^2 in
# the trapezoid inner product, so theta >= 1/2 never grows the linear norm
SCHEME_CLOSURE: Closure = Closure.ENERGY_STABLE


class SolverState(BaseModel):
    """
    One accepted time level.

    dt is the step about to be taken from this state; dt_prev is the step that
    produced u from u_prev.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    t: float = 0.0
    u: Field
    u_prev: Field | None = None
    dt: float
    dt_prev: float | None = None
    step_index: int = 0

    def time_derivative(self) -> Field | None:
        """(u - u_prev) / dt_prev, or None before the first step."""
        if self.u_prev is None or not self.dt_prev:
            return None
        return Field(self.u.grid, (self.u.values - self.u_prev.values) / self.dt_prev)


def mode_operator(
    nx: int, params: ModelParams, kappa2: float, kappa4: float
) -> sp.csr_matrix:
    """x-operator of A + eps L on one transverse mode: D3 + (c - kappa2) D1 + eps (D4 + kappa4)."""
    operator = x_derivative_matrix(nx, 3, SCHEME_CLOSURE) + (
        params.c - kappa2
    ) * x_derivative_matrix(nx, 1, SCHEME_CLOSURE)
    if params.epsilon > 0.0:
        operator = operator + params.epsilon * (
            x_derivative_matrix(nx, 4, SCHEME_CLOSURE) + kappa4 * sp.identity(nx + 1, format="csr")
        )
    return operator.tocsr()


def implicit_matrix(
    nx: int, params: ModelParams, dt: float, theta: float, kappa2: float, kappa4: float
) -> sp.csc_matrix:
    """I + dt theta (A + eps L) on the interior rows, identity rows at x = 0 and x = 1."""
    interior: np.ndarray = np.ones(nx + 1)
    interior[0] = interior[-1] = 0.0
    operator = sp.diags(interior) @ mode_operator(nx, params, kappa2, kappa4)
    return (sp.identity(nx + 1, format="csr") + dt * theta * operator).tocsc()


class LinearSystemCache:
    """
    Factorizations of the implicit system for every transverse mode of one grid.

    Modes sharing (kappa2, kappa4) share a factorization. Real and imaginary parts
    of complex coefficients are solved separately against the real factors.
    """

    def __init__(
        self,
        grid: Grid,
        params: ModelParams,
        dt: float,
        theta: float,
        tolerance: float = 1e-8,
    ) -> None:
        if dt < 0.0:
            raise ValueError(f"dt must be non-negative, got {dt}")
        self.grid: Grid = grid
        self.params: ModelParams = params
        self.dt: float = dt
        self.theta: float = theta
        self.tolerance: float = tolerance
        self.key: str = generate_cache_key(grid.spec, params, dt, theta)

        kappa2, kappa4 = mode_eigenvalues(grid)
        pairs: np.ndarray = np.stack([kappa2.ravel(), kappa4.ravel()], axis=1)
        symbols, inverse = np.unique(pairs, axis=0, return_inverse=True)
        self.symbols: np.ndarray = symbols
        self.mode_groups: np.ndarray = np.asarray(inverse).reshape(-1)

        self.matrices: list[sp.csc_matrix] = []
        self.factors: list[SuperLU] = []
        for kappa2_value, kappa4_value in symbols:
            matrix = implicit_matrix(grid.nx, params, dt, theta, kappa2_value, kappa4_value)
            try:
                factor: SuperLU = splu(matrix, permc_spec="NATURAL")
            except RuntimeError as exc:
                raise NumericalFaultError(
                    f"singular factorization for transverse mode kappa2 = {kappa2_value:g}, "
                    f"kappa4 = {kappa4_value:g} (dt = {dt:g})"
                ) from exc
            self.matrices.append(matrix)
            self.factors.append(factor)
        logger.debug(
            "factorized %d mode systems for dt = %.6g, key %s", len(self.factors), dt, self.key[:12]
        )

    def matches(self, grid: Grid, params: ModelParams, dt: float) -> bool:
        return (
            self.grid == grid
            and self.params.c == params.c
            and self.params.epsilon == params.epsilon
            and self.dt == dt
        )

    def _solve_real(self, group: int, rhs: np.ndarray) -> np.ndarray:
        solution: np.ndarray = self.factors[group].solve(rhs)
        matrix: sp.csc_matrix = self.matrices[group]
        residual: float = float(np.max(np.abs(matrix @ solution - rhs), initial=0.0))
        scale: float = float(
            abs(matrix).max() * np.max(np.abs(solution), initial=0.0)
            + np.max(np.abs(rhs), initial=0.0)
        )
        if residual > self.tolerance * max(scale, 1.0):
            kappa2, kappa4 = self.symbols[group]
            raise NumericalFaultError(
                f"linear solve residual {residual:.3e} exceeds tolerance for transverse mode "
                f"kappa2 = {kappa2:g}, kappa4 = {kappa4:g}"
            )
        return solution

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """
        Solve the implicit system for a right-hand side given in physical space.

        Args:
            rhs (np.ndarray): Array shaped like the grid.

        Returns:
            np.ndarray: The solution, in physical space.
        """
        coeffs: np.ndarray = to_modes(self.grid, rhs)
        flat: np.ndarray = coeffs.reshape(coeffs.shape[0], -1)
        solution: np.ndarray = np.zeros_like(flat)
        for group in range(len(self.factors)):
            columns: np.ndarray = np.flatnonzero(self.mode_groups == group)
            block: np.ndarray = flat[:, columns]
            if np.iscomplexobj(block):
                solution[:, columns] = self._solve_real(
                    group, np.ascontiguousarray(block.real)
                ) + 1j * self._solve_real(group, np.ascontiguousarray(block.imag))
            else:
                solution[:, columns] = self._solve_real(group, np.ascontiguousarray(block))
        return from_modes(self.grid, solution.reshape(coeffs.shape))


def build_implicit_operator(
    params: ModelParams, grid: Grid, dt: float, theta: float, tolerance: float = 1e-8
) -> LinearSystemCache:
    """
    Factorize I + dt theta (A + eps L) for every transverse mode.

    Rows at x = 0 and x = 1 impose u = 0. u_x(1) = 0 enters through the
    reflected ghost u_{N+1} = u_{N-1}; the left ghost u_{-1} = -u_1 carries
    u_xx(0) = 0, exact when eps > 0 and a dissipative closure when eps = 0.

    Args:
        params (ModelParams): Model coefficients; the forcing is irrelevant here.
        grid (Grid): The grid.
        dt (float): Time step; 0 gives the identity system.
        theta (float): Implicit weight in [1/2, 1].
        tolerance (float): Bound on the scaled residual of every solve.

    Returns:
        LinearSystemCache: The factorized systems.
    """
    return LinearSystemCache(grid, params, dt, theta, tolerance)


def select_dt(u: Field, grid: Grid, cfg: StepConfig) -> float:
    """clamp(cfl h / (1 + max|u|), dt_min, dt_max)."""
    candidate: float = cfg.cfl * grid.hx / (1.0 + u.max_abs())
    return min(max(candidate, cfg.dt_min), cfg.dt_max)


def extrapolated_nonlinear(
    state: SolverState, theta: float, extrapolation: NonlinearExtrapolation
) -> np.ndarray:
    """
    The split nonlinearity extrapolated to t + theta dt.

    AB2 with variable steps: (1 + theta w) N(u^n) - theta w N(u^{n-1}), w = dt / dt_prev.
    Explicit Euler (N(u^n)) on the first step or when AB2 is disabled.
    """
    current: np.ndarray = nonlinear_split(state.u).values
    if (
        extrapolation != NonlinearExtrapolation.AB2
        or state.u_prev is None
        or not state.dt_prev
    ):
        return current
    ratio: float = theta * state.dt / state.dt_prev
    previous: np.ndarray = nonlinear_split(state.u_prev).values
    return (1.0 + ratio) * current - ratio * previous


def linear_operator_values(u: Field, params: ModelParams) -> np.ndarray:
    """(A + eps L) u with the closure the implicit systems are built on."""
    values: np.ndarray = op_A(u, params.c, SCHEME_CLOSURE).values
    if params.epsilon > 0.0:
        values = values + params.epsilon * op_L(u, SCHEME_CLOSURE).values
    return values


def imex_step(
    state: SolverState,
    cache: LinearSystemCache,
    params: ModelParams,
    extrapolation: NonlinearExtrapolation = NonlinearExtrapolation.AB2,
) -> SolverState:
    """
    Advance one step:
    [I + dt theta M] u^{n+1} = u^n - dt (1 - theta) M u^n - dt N* + dt f(t + theta dt),
    with M = A + eps L and N* the extrapolated split nonlinearity.

    Args:
        state (SolverState): Current level; state.dt is the step taken.
        cache (LinearSystemCache): Factorizations built for (grid, params, state.dt).
        params (ModelParams): Model coefficients and forcing.
        extrapolation (NonlinearExtrapolation): Extrapolant of the nonlinearity.

    Returns:
        SolverState: The next level.
    """
    u: Field = state.u
    dt: float = state.dt
    if not cache.matches(u.grid, params, dt):
        raise NumericalFaultError(
            f"stale linear system cache: built for dt = {cache.dt:g}, step uses dt = {dt:g}"
        )
    theta: float = cache.theta

    rhs: np.ndarray = u.values - dt * (1.0 - theta) * linear_operator_values(u, params)
    if params.nonlinear:
        rhs = rhs - dt * extrapolated_nonlinear(state, theta, extrapolation)
    rhs = rhs + dt * forcing_eval(params.forcing, u.grid, state.t + theta * dt).values
    rhs[0] = 0.0
    rhs[-1] = 0.0

    values: np.ndarray = cache.solve(rhs)
    if not np.all(np.isfinite(values)):
        raise NumericalFaultError(
            f"non-finite solution at step {state.step_index + 1}, t = {state.t + dt:.6g}"
        )
    values[0] = 0.0
    values[-1] = 0.0
    return SolverState(
        t=state.t + dt,
        u=u.with_values(values),
        u_prev=u,
        dt=dt,
        dt_prev=dt,
        step_index=state.step_index + 1,
    )


def guard_norm(u: Field, kind: BlowupNorm) -> float:
    if kind == "l2":
        return norm(u)
    if kind == "grad":
        return math.sqrt(gradient_sq(u))
    return u.max_abs()


class Trajectory(BaseModel):
    """Everything one run produced: records, the kept states, and how it ended."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    records: list[DiagnosticsRecord]
    states: list[SolverState]
    status: Literal["completed", "blowup_suspected"] = "completed"
    t_reached: float
    grid: Grid
    params: ModelParams
    step: StepConfig
    ut0: Field
    compatibility: CompatibilityReport
    steps_taken: int = 0


def _next_dt(current: float | None, target: float) -> float:
    if current is None or target < current or target > DT_GROWTH_HYSTERESIS * current:
        return target
    return current


def run(
    config: RunConfig,
    keep_states: Literal["none", "records", "all"] = "records",
    on_step: Callable[[SolverState], None] | None = None,
    fault_dump: Callable[[SolverState], str] | None = None,
    factorizations: FactorizationCache | None = None,
) -> Trajectory:
    """
    Integrate from t = 0 to t_end, recording diagnostics once per record interval.

    Args:
        config (RunConfig): Validated configuration.
        keep_states (str): Which states the trajectory keeps: none, the recorded
            ones, or every accepted step.
        on_step (Callable | None): Called with every accepted state (snapshots).
        fault_dump (Callable | None): Writes the last good state on a numerical
            fault and returns where it went.
        factorizations (FactorizationCache | None): Store of factorized systems,
            reused when dt returns to an earlier value.

    Returns:
        Trajectory: Records, kept states and the final status.
    """
    grid: Grid = make_grid(config.grid)
    params: ModelParams = config.params
    step: StepConfig = config.step
    factorizations = factorizations or LocalFactorizationCache()

    u0: Field = initial_condition(config.initial, params.forcing, grid, params.epsilon)
    compatibility: CompatibilityReport = check_compatibility(
        u0, params, config.tolerances.compatibility
    )
    if not compatibility.passed:
        worst: str = max(
            compatibility.boundary_residuals, key=compatibility.boundary_residuals.get
        )
        message: str = (
            f"initial data violates compatibility: {worst} = "
            f"{compatibility.boundary_residuals[worst]:.3e}"
        )
        if config.run.enforce_compatibility:
            raise CompatibilityError(message, rule="compatibility")
        logger.warning(message)

    ut0: Field = initial_time_derivative(u0, params)[0]
    state: SolverState = SolverState(u=u0, dt=select_dt(u0, grid, step))
    records: list[DiagnosticsRecord] = [record(state, params, ut=ut0)]
    states: list[SolverState] = [state] if keep_states != "none" else []

    t_end: float = config.run.t_end
    interval: float = config.run.record_interval
    next_record: float = interval
    reference: float = config.run.blowup_reference or guard_norm(u0, config.run.blowup_norm) or 1.0
    threshold: float = config.run.blowup_factor * reference
    status: str = "completed"
    current_dt: float | None = None

    logger.info(
        "run: d = %d, nx = %d, eps = %g, c = %g, t_end = %g",
        grid.d,
        grid.nx,
        params.epsilon,
        params.c,
        t_end,
    )
    with fft.set_workers(config.run.threads):
        while t_end - state.t > TIME_EPSILON * t_end:
            current_dt = _next_dt(current_dt, select_dt(state.u, grid, step))
            dt: float = min(current_dt, t_end - state.t)
            if t_end - state.t - dt <= TIME_EPSILON * t_end:
                dt = t_end - state.t
            state = state.model_copy(update={"dt": dt})

            key: str = generate_cache_key(grid.spec, params, dt, step.theta)
            system: LinearSystemCache | None = factorizations.get_system(key)
            if system is None:
                system = build_implicit_operator(
                    params, grid, dt, step.theta, config.tolerances.solver
                )
                factorizations.add_system(key, system)
                logger.debug("new implicit system at t = %.6g, dt = %.6g", state.t, dt)

            try:
                state = imex_step(state, system, params, step.nonlinear_extrapolation)
            except NumericalFaultError as exc:
                if fault_dump is None:
                    raise
                raise NumericalFaultError(str(exc), snapshot=fault_dump(state)) from exc

            if on_step is not None:
                on_step(state)
            if keep_states == "all":
                states.append(state)

            tripped: bool = guard_norm(state.u, config.run.blowup_norm) > threshold
            finished: bool = t_end - state.t <= TIME_EPSILON * t_end
            if state.t >= next_record - TIME_EPSILON * interval or tripped or finished:
                records.append(record(state, params))
                if keep_states == "records":
                    states.append(state)
                while next_record <= state.t + TIME_EPSILON * interval:
                    next_record += interval
            if tripped:
                status = "blowup_suspected"
                logger.warning(
                    "blowup guard tripped at t = %.6g (%s norm above %g x initial)",
                    state.t,
                    config.run.blowup_norm,
                    config.run.blowup_factor,
                )
                break

    logger.info("run finished: status %s, t = %.6g, %d steps", status, state.t, state.step_index)
    return Trajectory(
        records=records,
        states=states,
        status=status,
        t_reached=state.t,
        grid=grid,
        params=params,
        step=step,
        ut0=ut0,
        compatibility=compatibility,
        steps_taken=state.step_index,
    )

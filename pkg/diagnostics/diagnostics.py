"""
Norms and traces of recorded states, the constants of the a priori estimates,
and the Riccati-type timescale check.
"""

import logging
import math
from collections.abc import Sequence
from typing import TYPE_CHECKING

import numpy as np

from geometry.geometry import initial_time_derivative_limit
from models.core import BCTag, Field
from models.params import ModelParams
from models.records import (
    BoundCheckReport,
    DiagnosticsRecord,
    EstimateConstants,
    GronwallReport,
)
from operators.operators import (
    Axis,
    Side,
    Weight,
    derivative,
    gradient_sq,
    norm,
    op_L,
    trace,
    transverse_norm,
)
from zk.zk import forcing_eval

if TYPE_CHECKING:
    from stepper.stepper import SolverState

logger = logging.getLogger(__name__)


def record(
    state: "SolverState", params: ModelParams, ut: Field | None = None
) -> DiagnosticsRecord:
    """
    Every norm and trace of one state.

    Args:
        state (SolverState): The state; u_t is differenced from u_prev unless ut is given.
        params (ModelParams): Model coefficients and forcing.
        ut (Field | None): Time derivative to use instead of differencing.

    Returns:
        DiagnosticsRecord: The record; u_t entries are None when no time derivative exists.
    """
    u: Field = state.u
    grid = u.grid
    ux: Field = derivative(u, Axis.X, 1)
    uxx: Field = derivative(u, Axis.X, 2)
    uyy: Field = derivative(u, Axis.Y, 2)

    ux_l2: float = norm(ux)
    uxx_l2: float = norm(uxx)
    uyy_l2: float = norm(uyy)
    uzz_l2: float = norm(derivative(u, Axis.Z, 2)) if grid.d == 2 else 0.0
    l2: float = norm(u)

    if ut is None:
        ut = state.time_derivative()
    ut_l2: float | None = None
    ut_weighted: float | None = None
    grad_ut_l2: float | None = None
    if ut is not None:
        ut_l2 = norm(ut)
        ut_weighted = norm(ut, Weight.ONE_PLUS_X)
        grad_ut_l2 = math.sqrt(gradient_sq(ut))

    return DiagnosticsRecord(
        t=state.t,
        l2=l2,
        l2_weighted_x=norm(u, Weight.X),
        l2_weighted_1px=norm(u, Weight.ONE_PLUS_X),
        ux_l2=ux_l2,
        uxx_l2=uxx_l2,
        grad_l2=math.sqrt(gradient_sq(u)),
        uyy_l2=uyy_l2,
        uzz_l2=uzz_l2,
        xi_norm=math.sqrt(uxx_l2**2 + uyy_l2**2 + uzz_l2**2),
        trace_ux0=transverse_norm(grid, trace(u, 1, Side.LEFT)),
        trace_uxx1=transverse_norm(grid, trace(u, 2, Side.RIGHT)),
        ut_l2=ut_l2,
        ut_weighted=ut_weighted,
        grad_ut_l2=grad_ut_l2,
        sigma=ux_l2 + l2,
        nonlin_l2=norm(u.values * ux.values, grid=grid),
        f_l2=norm(forcing_eval(params.forcing, grid, state.t, "f")),
        ft_l2=norm(forcing_eval(params.forcing, grid, state.t, "f_t")),
    )


def kappa(nu: float, f_sup_l2: float, u0x_l2: float, c_prime: float) -> float:
    """|f|^2 + c' nu^2 + c' nu^6 + |u0_x|^2."""
    if min(nu, f_sup_l2, u0x_l2, c_prime) < 0.0:
        raise ValueError("kappa takes non-negative arguments only")
    return f_sup_l2**2 + c_prime * nu**2 + c_prime * nu**6 + u0x_l2**2


def initial_time_derivative(
    u0: Field, params: ModelParams, forcing: Field | None = None
) -> tuple[Field, float, float]:
    """
    u_t at t = 0 from the equation: -eps L u0 - Lap u0_x - u0 u0_x - c u0_x + f(0).

    Args:
        u0 (Field): Initial data.
        params (ModelParams): Model coefficients and forcing.
        forcing (Field | None): Precomputed f(0).

    Returns:
        tuple: (u_t0, |u_t0|, |L u0| + |Lap u0_x + u0 u0_x + c u0_x - f(0)|), the last
        being an upper bound of |u_t0| that does not depend on eps <= 1.
    """
    limit: Field = initial_time_derivative_limit(u0, params, forcing)
    fourth: Field = op_L(Field(u0.grid, u0.values, BCTag.UNCONSTRAINED))
    values: np.ndarray = limit.values - params.epsilon * fourth.values
    ut0: Field = Field(u0.grid, values)
    bound: float = norm(fourth) + norm(limit)
    return ut0, norm(ut0), bound


def existence_time(mu: float, c3: float) -> float:
    """c3 / mu^4."""
    if mu <= 0.0:
        raise ValueError("existence_time needs mu > 0")
    if c3 <= 0.0:
        raise ValueError("existence_time needs c3 > 0")
    return c3 / mu**4


def horizon(t_end: float, mu: float, c3: float) -> float:
    """min(T, T1)."""
    if math.isinf(c3):
        return t_end
    return min(t_end, existence_time(mu, c3))


def riccati_horizon(c2: float, mu0: float) -> float:
    """3 / (8 c2 mu0^4), the time up to which Y <= 2 mu0^2 is guaranteed."""
    if c2 <= 0.0:
        return math.inf
    return 3.0 / (8.0 * c2 * mu0**4)


def _as_series(times: Sequence[float], values: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    t: np.ndarray = np.asarray(times, dtype=float)
    y: np.ndarray = np.asarray(values, dtype=float)
    if t.size == 0 or y.size == 0:
        raise ValueError("empty time series")
    if t.shape != y.shape:
        raise ValueError(f"times and values differ in length: {t.size} != {y.size}")
    return t, y


def gronwall_check(
    times: Sequence[float],
    values: Sequence[float],
    c2: float,
    mu0: float,
    slack: float = 1e-6,
) -> GronwallReport:
    """
    Check a sampled Y against dY/dt <= c2 Y^3 and Y <= 2 mu0^2 on [0, 3/(8 c2 mu0^4)].

    The growth test compares forward differences with the trapezoid average of
    c2 Y^3 over each interval, which bounds every solution of Y' = q Y^3 with q <= c2.

    Args:
        times (Sequence[float]): Sample times, increasing.
        values (Sequence[float]): Samples of Y.
        c2 (float): Growth constant.
        mu0 (float): Bound of sqrt(Y(0)).
        slack (float): Relative slack of both tests.

    Returns:
        GronwallReport: Pass flags, the guaranteed horizon, the largest excess of each
        test and the first time either test fails.
    """
    t, y = _as_series(times, values)
    bound_horizon: float = riccati_horizon(c2, mu0)
    violations: list[tuple[float, str]] = []

    max_growth_excess: float = -math.inf
    if t.size > 1:
        dt: np.ndarray = np.diff(t)
        rate: np.ndarray = np.diff(y) / dt
        allowed: np.ndarray = c2 * 0.5 * (y[:-1] ** 3 + y[1:] ** 3) * (1.0 + slack)
        excess: np.ndarray = rate - allowed
        max_growth_excess = float(np.max(excess))
        failing: np.ndarray = np.flatnonzero(excess > 0.0)
        if failing.size:
            violations.append((float(t[failing[0] + 1]), "growth"))

    cap: float = 2.0 * mu0**2
    inside: np.ndarray = t <= bound_horizon * (1.0 + slack)
    bound_margin: float = float(np.max(y[inside] - cap)) if np.any(inside) else -math.inf
    over: np.ndarray = np.flatnonzero(inside & (y > cap * (1.0 + slack)))
    if over.size:
        violations.append((float(t[over[0]]), "bound"))

    first: tuple[float, str] | None = min(violations) if violations else None
    report: GronwallReport = GronwallReport(
        passed=first is None,
        growth_passed=not any(kind == "growth" for _, kind in violations),
        bound_passed=not any(kind == "bound" for _, kind in violations),
        horizon=bound_horizon,
        bound_margin=bound_margin,
        max_growth_excess=max_growth_excess,
        first_violation_time=None if first is None else first[0],
        violation=None if first is None else first[1],
    )
    if first is not None:
        logger.warning("Riccati check fails (%s) at t = %.6g", first[1], first[0])
    return report


def fit_c2(times: Sequence[float], values: Sequence[float]) -> tuple[float, float]:
    """
    Growth constant of Y fitted from its increasing intervals.

    Returns:
        tuple: (least-squares fit of log(dY/dt) - 3 log Y with unit slope fixed at 3,
        smallest c2 passing the growth test). Both 0 when Y never grows.
    """
    t, y = _as_series(times, values)
    if t.size < 2:
        return 0.0, 0.0
    rate: np.ndarray = np.diff(y) / np.diff(t)
    cubes: np.ndarray = 0.5 * (y[:-1] ** 3 + y[1:] ** 3)
    growing: np.ndarray = (rate > 0.0) & (cubes > 0.0)
    if not np.any(growing):
        return 0.0, 0.0
    ratios: np.ndarray = rate[growing] / cubes[growing]
    return float(np.exp(np.mean(np.log(ratios)))), float(np.max(ratios))


def riccati_series(records: Sequence[DiagnosticsRecord]) -> tuple[np.ndarray, np.ndarray]:
    """Times and Y = |sqrt(1+x) u_t|^2 + 1 over the records that carry u_t."""
    kept: list[DiagnosticsRecord] = [r for r in records if r.ut_weighted is not None]
    times: np.ndarray = np.array([r.t for r in kept])
    series: np.ndarray = np.array([r.ut_weighted**2 + 1.0 for r in kept])
    return times, series


def estimate_constants(
    records: Sequence[DiagnosticsRecord], c_prime: float = 1.0
) -> EstimateConstants:
    """
    Measure the estimate constants of one run.

    nu is the largest recorded |u|, mu0 = sqrt(Y(0)), mu = mu0 + sqrt(kappa),
    c2 the least-squares growth fit, c1 = max(c2 - |f_t|^2, 0) and c3 the largest
    value with c3 / mu^4 <= 3 / (8 c2 mu0^4).
    """
    if not records:
        raise ValueError("estimate_constants needs at least one record")
    nu: float = max(r.l2 for r in records)
    f_sup: float = max(r.f_l2 for r in records)
    ft_sup: float = max(r.ft_l2 for r in records)
    u0x: float = records[0].ux_l2
    kappa_value: float = kappa(nu, f_sup, u0x, c_prime)

    times, series = riccati_series(records)
    if series.size == 0:
        raise ValueError("no record carries a time derivative")
    mu0: float = math.sqrt(series[0])
    mu: float = mu0 + math.sqrt(kappa_value)
    c2: float = fit_c2(times, series)[0]
    c1: float = max(c2 - ft_sup**2, 0.0)
    c3: float = mu**4 * riccati_horizon(c2, mu0)
    return EstimateConstants(
        c_prime=c_prime,
        nu=nu,
        kappa=kappa_value,
        mu0=mu0,
        mu=mu,
        c1=c1,
        c2=c2,
        c3=c3,
        f_sup_l2=f_sup,
        ft_sup_l2=ft_sup,
        u0x_l2=u0x,
    )


def bound_check(
    records: Sequence[DiagnosticsRecord], c_prime: float = 1.0
) -> BoundCheckReport:
    """
    |u_x|^2 <= |u_t|^2 + kappa on every record carrying u_t, with kappa built from
    the running sup of |u| up to that record.

    Returns:
        BoundCheckReport: Failures as (t, lhs, rhs) and the smallest c' that passes.
    """
    if not records:
        raise ValueError("bound_check needs at least one record")
    f_sup: float = max(r.f_l2 for r in records)
    u0x: float = records[0].ux_l2
    running_nu: float = 0.0
    minimal: float = 0.0
    kappa_last: float = kappa(0.0, f_sup, u0x, c_prime)
    failures: list[tuple[float, float, float]] = []
    for entry in records:
        running_nu = max(running_nu, entry.l2)
        if entry.ut_l2 is None:
            continue
        kappa_last = kappa(running_nu, f_sup, u0x, c_prime)
        lhs: float = entry.ux_l2**2
        rhs: float = entry.ut_l2**2 + kappa_last
        if lhs > rhs:
            failures.append((entry.t, lhs, rhs))
        shortfall: float = lhs - entry.ut_l2**2 - f_sup**2 - u0x**2
        weight: float = running_nu**2 + running_nu**6
        if shortfall > 0.0:
            minimal = max(minimal, shortfall / weight if weight > 0.0 else math.inf)
    if failures:
        logger.warning("|u_x|^2 <= |u_t|^2 + kappa fails on %d records", len(failures))
    return BoundCheckReport(
        passed=not failures,
        kappa=kappa_last,
        c_prime=c_prime,
        minimal_c_prime=minimal,
        failures=failures,
    )

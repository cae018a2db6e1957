"""
Desk-scale acceptance experiments: balances, eps-uniformity, the trace sweep,
slice identities, manufactured convergence and the horizon trend.
"""

import math

import numpy as np
import pytest

from bvp.bvp import BVPProblem, sample_source, solve_bvp, trace_sweep
from diagnostics.balance import BalanceKind, energy_balance_residual
from diagnostics.diagnostics import bound_check, existence_time, gronwall_check
from diagnostics.identities import identity_residuals
from experiments.experiments import horizon_scan, mms_ladder, sweep_eps
from geometry.geometry import make_grid
from models.core import Field, Grid, GridSpec
from models.params import ModelParams, RunConfig
from models.records import (
    BVPSolution,
    EpsilonComparison,
    HorizonResult,
    IdentityKind,
    IdentityReport,
    MMSResult,
    SweepRecord,
)
from stepper.stepper import Trajectory, run
from zk.zk import ManufacturedSolution, forcing_eval, manufactured_forcing

pytestmark = pytest.mark.slow

SWEEP_EPSILONS: list[float] = [1e-2, 1e-3, 1e-4]
BVP_EPSILONS: list[float] = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5]
BVP_CELLS: int = 2048


def bump_config(nx: int, nonlinear: bool, **step: float) -> RunConfig:
    return RunConfig.model_validate(
        {
            "grid": {"d": 1, "nx": nx, "ny": 16},
            "model": {"c": 1.0, "epsilon": 0.01, "nonlinear": nonlinear},
            "initial": {"preset": "poly-bump", "coefficients": [1.0]},
            "step": {"theta": 0.5, **step},
            "run": {"t_end": 0.2 if not nonlinear else 0.05, "record_interval": 0.01},
        }
    )


def nonlinear_run(nx: int) -> Trajectory:
    return run(bump_config(nx, nonlinear=True, cfl=0.05), keep_states="all")


def test_linear_balance_closes_per_step():
    """200 constant steps of the linear scheme: every step's u-balance defect is below 1e-10 |u0|^2."""
    dt: float = 1e-3
    trajectory: Trajectory = run(bump_config(64, nonlinear=False, dt_min=dt, dt_max=dt), keep_states="all")
    assert trajectory.steps_taken == 200
    residuals: np.ndarray = energy_balance_residual(trajectory, BalanceKind.U)
    initial_energy: float = trajectory.records[0].l2 ** 2
    assert residuals.shape == (200,)
    assert np.max(residuals) * dt <= 1e-10 * initial_energy


def test_nonlinear_balance_is_second_order():
    """The split nonlinearity leaves an O(h^2) defect that shrinks at least 3.5x per refinement."""
    worst: list[float] = []
    for nx in (64, 128):
        residuals: np.ndarray = energy_balance_residual(nonlinear_run(nx), BalanceKind.U)
        # the first interval is bootstrapped by explicit Euler
        worst.append(float(np.max(residuals[1:])))
    assert worst[1] > 0.0
    assert worst[0] / worst[1] >= 3.5


def test_epsilon_sweep_is_uniform():
    """sup |u| and the gradient integrals agree within 10% across eps, and both contract as eps shrinks."""
    config: RunConfig = RunConfig.model_validate(
        {
            "grid": {"d": 1, "nx": 64, "ny": 16},
            "model": {"c": 1.0, "nonlinear": True},
            "initial": {"preset": "poly-bump", "coefficients": [1.0]},
            "run": {"t_end": 0.1, "record_interval": 0.01},
            "sweep": {"epsilons": SWEEP_EPSILONS},
        }
    )
    members, comparisons = sweep_eps(config)
    assert [m.status for m in members] == ["completed"] * 3

    sup_l2: list[float] = [m.sup_l2 for m in members]
    assert (max(sup_l2) - min(sup_l2)) / max(sup_l2) < 0.1

    assert len(comparisons) == 2
    assert all(isinstance(c, EpsilonComparison) for c in comparisons)
    assert comparisons[0].l2_difference > comparisons[1].l2_difference

    gradients: list[float] = [m.grad_sq_time_integral for m in members]
    assert (max(gradients) - min(gradients)) / max(gradients) < 0.1
    assert abs(gradients[1] - gradients[2]) < abs(gradients[0] - gradients[1])


def test_extremal_riccati_series():
    """Y = (1 - 2t)^(-1/2) reaches 2 at t = 3/8 and passes; a 10% jump fails where it happens."""
    times: np.ndarray = np.linspace(0.0, 3.0 / 8.0, 10_000)
    series: np.ndarray = (1.0 - 2.0 * times) ** -0.5
    assert series[-1] == pytest.approx(2.0, abs=1e-6)
    assert gronwall_check(times, series, c2=1.0, mu0=1.0).passed

    perturbed: np.ndarray = np.where(times >= 0.1, 1.1 * series, series)
    report = gronwall_check(times, perturbed, c2=1.0, mu0=1.0)
    assert not report.passed
    assert report.first_violation_time == pytest.approx(times[times >= 0.1][0])


def test_trace_sweep_for_constant_source():
    """g = 6: exact eps = 0 cubic, bounded u_xx and an O(eps) outer error."""
    g: np.ndarray = sample_source("constant", (6.0,), BVP_CELLS)
    x: np.ndarray = np.arange(BVP_CELLS + 1) / BVP_CELLS
    limit: BVPSolution = solve_bvp(BVPProblem(g=g))
    assert np.max(np.abs(limit.u - x * (x - 1.0) ** 2)) <= 1e-8

    records, _ = trace_sweep(g, BVP_EPSILONS, BVP_CELLS)
    assert all(isinstance(r, SweepRecord) for r in records)
    small: list[float] = [r.sup_uxx for r in records if r.epsilon <= 1e-2]
    assert max(small) / min(small) <= 1.5

    errors: list[float] = [r.err_outside_layer for r in records]
    assert all(a > b for a, b in zip(errors, errors[1:]))
    for r in records[-2:]:
        assert r.err_outside_layer <= 10.0 * r.epsilon


def slice_reports(nx: int) -> dict[IdentityKind, IdentityReport]:
    grid: Grid = make_grid(GridSpec(d=1, nx=nx, ny=16))
    params: ModelParams = ModelParams(c=1.0, epsilon=0.01, nonlinear=False)
    exact: ManufacturedSolution = ManufacturedSolution.for_grid("slope-steady", grid)
    u: Field = exact.evaluate(grid, 0.0)
    f: Field = forcing_eval(manufactured_forcing(exact, params), grid, 0.0)
    return {r.identity: r for r in identity_residuals(u, params, f, xtilde=0.5)}


def test_slice_identities_converge():
    """Both equalities close at second order; the u_xx bound holds with a small constant."""
    coarse = slice_reports(64)
    fine = slice_reports(128)
    for identity in (IdentityKind.EQ_X_MOMENT, IdentityKind.EQ_PARTIAL_INTEGRAL):
        assert fine[identity].residual > 0.0
        assert coarse[identity].residual / fine[identity].residual >= 3.5
    for reports in (coarse, fine):
        inequality: IdentityReport = reports[IdentityKind.UXX_INEQUALITY]
        assert inequality.passed
        assert inequality.details["minimal_c_prime"] <= 10.0


def test_manufactured_solution_converges_at_second_order():
    """e^-t x^3 (1-x)^2 cos y on nx = 32, 64, 128 with dt proportional to h, for eps = 0 and 0.01."""
    config: RunConfig = RunConfig.model_validate(
        {
            "grid": {"d": 1, "nx": 32, "ny": 16},
            "model": {"c": 1.0, "nonlinear": True},
            "run": {"t_end": 0.05, "record_interval": 0.05},
            "mms": {"ladder": [32, 64, 128], "solution": "poly-exp", "epsilons": [0.0, 0.01]},
        }
    )
    results: list[MMSResult] = mms_ladder(config)
    assert len(results) == 6
    orders: list[float] = [r.order for r in results if r.order is not None]
    assert len(orders) == 4
    assert all(1.7 <= order <= 2.3 for order in orders), orders


def test_relative_guard_never_fires_without_forcing():
    """
    Nonlinear poly-bump ladder with the relative L2 guard: with f = 0 the transport
    term is energy neutral and the linear part dissipative, so no amplitude trips
    the guard and each reports an infinite trigger time.
    """
    config: RunConfig = RunConfig.model_validate(
        {
            "grid": {"d": 1, "nx": 32, "ny": 8},
            "model": {"c": 1.0, "epsilon": 0.01, "nonlinear": True},
            "initial": {"preset": "poly-bump", "coefficients": [1.0]},
            "run": {"t_end": 0.02, "record_interval": 0.005, "blowup_factor": 5.0},
        }
    )
    results: list[HorizonResult] = horizon_scan(config, [1.0, 2.0, 4.0])
    assert [r.status for r in results] == ["completed"] * 3
    assert all(math.isinf(r.t_trigger) for r in results)
    mus: list[float] = [r.mu for r in results]
    assert mus[0] < mus[1] < mus[2]
    assert existence_time(2.0, 7.0) == existence_time(1.0, 7.0) / 2.0**4


def test_gradient_bound_holds_on_the_acceptance_runs():
    """|u_x|^2 <= |u_t|^2 + kappa with c' = 1 on the nonlinear balance run and every sweep member."""
    assert bound_check(nonlinear_run(64).records, c_prime=1.0).failures == []
    for epsilon in SWEEP_EPSILONS:
        config: RunConfig = RunConfig.model_validate(
            {
                "grid": {"d": 1, "nx": 64, "ny": 16},
                "model": {"c": 1.0, "epsilon": epsilon, "nonlinear": True},
                "initial": {"preset": "poly-bump", "coefficients": [1.0]},
                "run": {"t_end": 0.1, "record_interval": 0.01},
            }
        )
        report = bound_check(run(config, keep_states="none").records, c_prime=1.0)
        assert report.passed, report.failures

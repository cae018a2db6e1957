"""
Experiment drivers behind the CLI: single runs, epsilon sweeps, the BVP trace
sweep, manufactured-solution ladders, trajectory verification and the
existence-horizon scan. Each writes its tables into an output directory
guarded by a manifest.
"""

import logging
import math
import os
from collections.abc import Sequence
from pathlib import Path

import numpy as np
from scipy.integrate import trapezoid

from bvp.bvp import BVPProblem, limit_solution, sample_source, solve_bvp, trace_sweep
from diagnostics.balance import BalanceKind, energy_balance_residual
from diagnostics.diagnostics import (
    bound_check,
    estimate_constants,
    existence_time,
    fit_c2,
    gronwall_check,
    initial_time_derivative,
    record,
    riccati_series,
)
from diagnostics.identities import identity_residuals
from geometry.geometry import make_grid
from models.core import BCTag, Field, Grid
from models.errors import ConfigError
from models.params import ForcingKind, ForcingSpec, InitialSpec, RunConfig
from models.records import (
    CompatibilityReport,
    DiagnosticsRecord,
    EpsilonComparison,
    EpsilonMember,
    EstimateConstants,
    GronwallReport,
    HorizonResult,
    IdentityKind,
    IdentityReport,
    Manifest,
    MMSResult,
    SnapshotEntry,
    SweepRecord,
    VerificationSummary,
)
from operators.operators import norm
from stepper.stepper import SolverState, Trajectory, run
from storage.records import (
    finalize_manifest,
    read_table,
    write_diagnostics_csv,
    write_manifest,
    write_sweep_csv,
    write_table,
)
from storage.snapshot import read_snapshot, snapshot_name, write_snapshot
from zk.zk import ManufacturedSolution, forcing_eval

logger = logging.getLogger(__name__)

OUTPUT_ENV: str = "ZK_OUT"
DEFAULT_OUTPUT: str = "zk-out"

DIAGNOSTICS_FILE: str = "diagnostics.csv"
SNAPSHOT_INDEX_FILE: str = "snapshots.csv"

BALANCE_IDENTITIES: dict[BalanceKind, IdentityKind] = {
    BalanceKind.U: IdentityKind.BALANCE_U,
    BalanceKind.XU: IdentityKind.BALANCE_XU,
    BalanceKind.ONE_PX_UT: IdentityKind.BALANCE_1PX_UT,
    BalanceKind.ONE_PX_UYY: IdentityKind.BALANCE_1PX_UYY,
    BalanceKind.ONE_PX_UYYYY: IdentityKind.BALANCE_1PX_UYYYY,
}


def output_directory(config: RunConfig, out: str | Path | None = None) -> Path:
    """--out, then [output] directory, then $ZK_OUT, then ./zk-out."""
    if out is not None:
        return Path(out)
    if config.output.directory is not None:
        return Path(config.output.directory)
    return Path(os.environ.get(OUTPUT_ENV, DEFAULT_OUTPUT))


def with_model(config: RunConfig, **updates: float | bool) -> RunConfig:
    """A copy of config with [model] entries replaced, re-validated."""
    document: dict = config.model_dump()
    document["model"].update(updates)
    return RunConfig.model_validate(document)


class _SnapshotWriter:
    """on_step hook writing every interval-th accepted state and indexing it."""

    def __init__(self, directory: Path, interval: int) -> None:
        self.directory: Path = directory
        self.interval: int = interval
        self.entries: list[SnapshotEntry] = []

    def __call__(self, state: SolverState) -> None:
        if not self.entries and state.step_index == 1 and state.u_prev is not None:
            self.write(SolverState(u=state.u_prev, dt=state.dt_prev or 0.0))
        if self.interval and state.step_index % self.interval == 0:
            self.write(state)

    def write(self, state: SolverState) -> None:
        name: str = snapshot_name(state.step_index)
        write_snapshot(self.directory / name, state.u)
        self.entries.append(SnapshotEntry(step=state.step_index, t=state.t, file=name))

    def dump_fault(self, state: SolverState) -> str:
        path: Path = self.directory / f"fault_{state.step_index:08d}.zkf"
        write_snapshot(path, state.u)
        return str(path)


def run_experiment(
    config: RunConfig,
    out_dir: str | Path | None = None,
    command: str = "run",
    keep_states: str = "records",
) -> Trajectory:
    """
    One trajectory; with an output directory, its diagnostics table, snapshots and manifest.

    Args:
        config (RunConfig): Validated configuration.
        out_dir (str | Path | None): Where to write; nothing is written when None.
        command (str): Recorded in the manifest.
        keep_states (str): Passed on to the stepper.

    Returns:
        Trajectory: The run.
    """
    if out_dir is None:
        return run(config, keep_states=keep_states)

    directory: Path = Path(out_dir)
    manifest: Manifest = write_manifest(directory, command, config)
    snapshots: _SnapshotWriter = _SnapshotWriter(directory, config.run.snapshot_interval)
    try:
        trajectory: Trajectory = run(
            config,
            keep_states=keep_states,
            on_step=snapshots if config.run.snapshot_interval else None,
            fault_dump=snapshots.dump_fault,
        )
    finally:
        files: list[str] = [entry.file for entry in snapshots.entries]
        if snapshots.entries:
            write_table(directory / SNAPSHOT_INDEX_FILE, "snapshots", snapshots.entries)
            files.append(SNAPSHOT_INDEX_FILE)
        finalize_manifest(directory, manifest, files)

    write_diagnostics_csv(directory / DIAGNOSTICS_FILE, trajectory.records)
    finalize_manifest(directory, manifest, files + [DIAGNOSTICS_FILE])
    return trajectory


def _final_field(trajectory: Trajectory) -> Field:
    return trajectory.states[-1].u


def sweep_eps(
    config: RunConfig, out_dir: str | Path | None = None
) -> tuple[list[EpsilonMember], list[EpsilonComparison]]:
    """
    Run the configured problem for every eps of [sweep] epsilons.

    Members run one after another, each into its own subdirectory. Consecutive
    members that reached the same final time are compared in L2.

    Returns:
        tuple: Per-member summaries and the pairwise comparisons.
    """
    directory: Path | None = Path(out_dir) if out_dir is not None else None
    manifest: Manifest | None = (
        write_manifest(directory, "sweep-eps", config) if directory is not None else None
    )

    members: list[EpsilonMember] = []
    finals: list[tuple[float, float, Field]] = []
    for epsilon in config.sweep.epsilons:
        member_config: RunConfig = with_model(config, epsilon=epsilon)
        member_dir: Path | None = directory / f"eps_{epsilon:.3e}" if directory else None
        trajectory: Trajectory = run_experiment(member_config, member_dir, command="sweep-eps")
        times: np.ndarray = np.array([r.t for r in trajectory.records])
        grad_sq: np.ndarray = np.array([r.grad_l2**2 for r in trajectory.records])
        members.append(
            EpsilonMember(
                epsilon=epsilon,
                status=trajectory.status,
                t_reached=trajectory.t_reached,
                sup_l2=max(r.l2 for r in trajectory.records),
                grad_sq_time_integral=float(trapezoid(grad_sq, times)) if times.size > 1 else 0.0,
            )
        )
        finals.append((epsilon, trajectory.t_reached, _final_field(trajectory)))
        logger.info("sweep member eps = %g finished with status %s", epsilon, trajectory.status)

    comparisons: list[EpsilonComparison] = []
    for (eps_a, t_a, u_a), (eps_b, t_b, u_b) in zip(finals, finals[1:]):
        if not math.isclose(t_a, t_b, rel_tol=1e-12):
            logger.warning("members eps = %g and %g stopped at different times", eps_a, eps_b)
            continue
        comparisons.append(
            EpsilonComparison(
                epsilon_a=eps_a,
                epsilon_b=eps_b,
                t=t_a,
                l2_difference=norm(u_a.values - u_b.values, grid=u_a.grid),
            )
        )

    if directory is not None and manifest is not None:
        write_table(directory / "members.csv", "members", members)
        write_table(directory / "comparison.csv", "comparison", comparisons)
        finalize_manifest(directory, manifest, ["members.csv", "comparison.csv"])
    return members, comparisons


def bvp_sweep(config: RunConfig, out_dir: str | Path | None = None) -> tuple[list[SweepRecord], float, float]:
    """
    The [bvp] trace sweep.

    Returns:
        tuple: Sweep records, the sup|u_xx| ratio across the sweep, and the max
        difference between the eps = 0 solve and the closed-form limit solve.
    """
    section = config.bvp
    g: np.ndarray = sample_source(section.source, section.coefficients, section.n)
    records, ratio = trace_sweep(
        g, section.epsilons, section.n, nonlinear=section.nonlinear, layer_cutoff=section.layer_cutoff
    )
    limit_gap: float = math.nan
    if not section.nonlinear:
        discrete = solve_bvp(BVPProblem(g=g, epsilon=0.0))
        limit_gap = float(np.max(np.abs(discrete.u - limit_solution(g, section.n).u)))

    if out_dir is not None:
        directory: Path = Path(out_dir)
        manifest: Manifest = write_manifest(directory, "bvp", config)
        write_sweep_csv(directory / "sweep.csv", records)
        finalize_manifest(directory, manifest, ["sweep.csv"])
    return records, ratio, limit_gap


def mms_ladder(config: RunConfig, out_dir: str | Path | None = None) -> list[MMSResult]:
    """
    Manufactured-solution errors on the [mms] ladder with dt = dt_per_h * h.

    Each rung runs to t_end from the exact solution at t = 0 and reports the L2
    error at the final time; the order is measured against the previous rung.
    """
    section = config.mms
    results: list[MMSResult] = []
    for epsilon in section.epsilons:
        previous: MMSResult | None = None
        for nx in section.ladder:
            dt: float = section.dt_per_h / nx
            document: dict = config.model_dump()
            document["grid"]["nx"] = nx
            document["model"]["epsilon"] = epsilon
            document["forcing"] = ForcingSpec(
                kind=ForcingKind.MANUFACTURED, solution=section.solution
            ).model_dump()
            document["initial"] = InitialSpec(preset="manufactured").model_dump()
            document["step"].update(dt_min=dt, dt_max=dt)
            document["run"].update(record_interval=config.run.t_end, blowup_factor=1e12)
            rung: RunConfig = RunConfig.model_validate(document)

            trajectory: Trajectory = run(rung, keep_states="records")
            grid: Grid = trajectory.grid
            exact: Field = ManufacturedSolution.for_grid(section.solution, grid).evaluate(
                grid, trajectory.t_reached, BCTag.UNCONSTRAINED
            )
            error: float = norm(_final_field(trajectory).values - exact.values, grid=grid)
            order: float | None = None
            if previous is not None and previous.error > 0.0 and error > 0.0:
                order = math.log(previous.error / error) / math.log(nx / previous.nx)
            current: MMSResult = MMSResult(epsilon=epsilon, nx=nx, dt=dt, error=error, order=order)
            logger.info("mms eps = %g, nx = %d: error %.3e, order %s", epsilon, nx, error, order)
            results.append(current)
            previous = current

    if out_dir is not None:
        directory: Path = Path(out_dir)
        manifest: Manifest = write_manifest(directory, "mms", config)
        write_table(directory / "mms.csv", "mms", results)
        finalize_manifest(directory, manifest, ["mms.csv"])
    return results


def _replay(config: RunConfig, snapshot_dir: Path) -> Trajectory:
    """A trajectory rebuilt from the snapshots of an earlier run."""
    grid: Grid = make_grid(config.grid)
    params = config.params
    tag: BCTag = BCTag.ZK_REGULARIZED if params.epsilon > 0.0 else BCTag.ZK_LIMIT
    entries: list[SnapshotEntry] = read_table(snapshot_dir / SNAPSHOT_INDEX_FILE, "snapshots")
    if not entries:
        raise ConfigError(f"{snapshot_dir} holds no snapshots", rule="snapshot_dir")

    states: list[SolverState] = []
    for entry in entries:
        u: Field = read_snapshot(snapshot_dir / entry.file, grid, tag)
        previous: SolverState | None = states[-1] if states else None
        consecutive: bool = previous is not None and previous.step_index + 1 == entry.step
        states.append(
            SolverState(
                t=entry.t,
                u=u,
                u_prev=previous.u if consecutive else None,
                dt=0.0,
                dt_prev=entry.t - previous.t if consecutive else None,
                step_index=entry.step,
            )
        )
    ut0: Field = initial_time_derivative(states[0].u, params)[0]
    records: list[DiagnosticsRecord] = [
        record(state, params, ut=ut0 if state.step_index == 0 else None) for state in states
    ]
    return Trajectory(
        records=records,
        states=states,
        t_reached=states[-1].t,
        grid=grid,
        params=params,
        step=config.step,
        ut0=ut0,
        compatibility=CompatibilityReport(boundary_residuals={}, passed=True, tolerance=0.0),
        steps_taken=states[-1].step_index,
    )


def _balance_reports(trajectory: Trajectory, config: RunConfig) -> list[IdentityReport]:
    states: list[SolverState] = trajectory.states
    scale: float = norm(states[0].u) ** 2 or 1.0
    # residuals are rates; the tolerance bounds the per-step defect
    longest: float = float(np.max(np.diff([s.t for s in states])))
    tolerance: float = config.tolerances.balance * scale / longest
    kinds: list[BalanceKind] = [BalanceKind.U, BalanceKind.XU, BalanceKind.ONE_PX_UT]
    kinds += [BalanceKind.ONE_PX_UYY, BalanceKind.ONE_PX_UYYYY]

    reports: list[IdentityReport] = []
    for kind in kinds:
        residuals: np.ndarray = energy_balance_residual(trajectory, kind)
        # the first interval is bootstrapped by explicit Euler
        if trajectory.params.nonlinear and residuals.size > 1:
            residuals = residuals[1:]
        worst: float = float(np.max(residuals, initial=0.0))
        reports.append(
            IdentityReport(
                identity=BALANCE_IDENTITIES[kind],
                residual=worst,
                resolution=trajectory.grid.nx,
                tolerance=tolerance,
                passed=worst <= tolerance,
                t=trajectory.t_reached,
                details={"intervals": float(residuals.size)},
            )
        )
    return reports


def verify_trajectory(
    config: RunConfig, snapshot_dir: str | Path | None = None
) -> VerificationSummary:
    """
    Replay a trajectory through every check: multiplier balances, the slice
    identities at the final state, the Riccati timescale and the gradient bound.

    Args:
        config (RunConfig): Configuration of the trajectory.
        snapshot_dir (str | Path | None): Directory with snapshots.csv; the run is
            recomputed keeping every step when None.

    Returns:
        VerificationSummary: All reports and the measured estimate constants.
    """
    snapshot_dir = snapshot_dir or config.verify.snapshot_dir
    if snapshot_dir is not None:
        trajectory: Trajectory = _replay(config, Path(snapshot_dir))
    else:
        trajectory = run(config, keep_states="all")

    reports: list[IdentityReport] = []
    consecutive: bool = len(trajectory.states) > 1 and all(
        b.step_index == a.step_index + 1 for a, b in zip(trajectory.states, trajectory.states[1:])
    )
    if consecutive:
        reports += _balance_reports(trajectory, config)
    else:
        logger.warning("stored states are not consecutive steps; balances skipped")

    final: SolverState = trajectory.states[-1]
    f_final: Field = forcing_eval(trajectory.params.forcing, trajectory.grid, final.t)
    for report in identity_residuals(
        final.u,
        trajectory.params,
        f_final,
        config.verify.xtilde,
        ut=final.time_derivative(),
        c_prime=config.run.c_prime,
        tolerance=config.tolerances.identity,
    ):
        reports.append(report.model_copy(update={"t": final.t}))

    gronwall: GronwallReport | None = None
    constants: EstimateConstants | None = None
    times, series = riccati_series(trajectory.records)
    if series.size:
        constants = estimate_constants(trajectory.records, config.run.c_prime)
        envelope: float = fit_c2(times, series)[1]
        gronwall = gronwall_check(
            times, series, envelope, constants.mu0, config.tolerances.gronwall_slack
        )

    return VerificationSummary(
        reports=reports,
        gronwall=gronwall,
        bound=bound_check(trajectory.records, config.run.c_prime),
        constants=constants,
    )


def horizon_scan(
    config: RunConfig, amplitudes: Sequence[float], out_dir: str | Path | None = None
) -> list[HorizonResult]:
    """
    Run the configured initial preset at each amplitude with the blowup guard on.

    Returns:
        list[HorizonResult]: Guard trigger time (inf when the guard never fired), the
        measured mu and the formula horizon c3 / mu^4 for each amplitude.
    """
    results: list[HorizonResult] = []
    for amplitude in amplitudes:
        document: dict = config.model_dump()
        document["initial"]["coefficients"] = [amplitude]
        scaled: RunConfig = RunConfig.model_validate(document)
        trajectory: Trajectory = run(scaled, keep_states="none")

        constants: EstimateConstants = estimate_constants(trajectory.records, config.run.c_prime)
        formula: float | None = None
        if constants.mu > 0.0 and 0.0 < constants.c3 < math.inf:
            formula = existence_time(constants.mu, constants.c3)
        tripped: bool = trajectory.status == "blowup_suspected"
        results.append(
            HorizonResult(
                amplitude=amplitude,
                status=trajectory.status,
                t_trigger=trajectory.t_reached if tripped else math.inf,
                mu=constants.mu,
                formula_horizon=formula,
            )
        )
        logger.info("amplitude %g: %s at t = %.6g", amplitude, trajectory.status, trajectory.t_reached)

    if out_dir is not None:
        directory: Path = Path(out_dir)
        manifest: Manifest = write_manifest(directory, "horizon", config)
        write_table(directory / "horizon.csv", "horizon", results)
        finalize_manifest(directory, manifest, ["horizon.csv"])
    return results

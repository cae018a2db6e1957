import logging
from collections.abc import Callable
from pathlib import Path
from typing import Annotated

import typer
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from experiments.experiments import (
    bvp_sweep,
    horizon_scan,
    mms_ladder,
    output_directory,
    run_experiment,
    sweep_eps,
    verify_trajectory,
)
from models.errors import ConfigError, NumericalFaultError
from models.params import RunConfig
from stepper.stepper import Trajectory
from storage.config import load_config

logger = logging.getLogger(__name__)

EXIT_OK: int = 0
EXIT_CHECK_FAILED: int = 1
EXIT_CONFIG: int = 2
EXIT_NUMERICAL_FAULT: int = 3
EXIT_BLOWUP: int = 4

ConfigOption = Annotated[Path, typer.Option("--config", "-c", help="TOML configuration file")]
OutOption = Annotated[
    Path | None, typer.Option("--out", "-o", help="Output directory (default: [output] directory, then $ZK_OUT)")
]
ThreadsOption = Annotated[
    int | None, typer.Option("--threads", min=1, help="Workers for the transverse transforms")
]
SeedOption = Annotated[
    int | None, typer.Option("--seed", help="Seed of randomized drivers; PDE runs are deterministic")
]
VerboseOption = Annotated[bool, typer.Option("--verbose", "-v", help="Debug logging")]


def configure_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(rich_tracebacks=True, show_path=verbose)],
        force=True,
    )
    logging.captureWarnings(True)


def _fmt(value: float | None) -> str:
    return "-" if value is None else f"{value:.6g}"


class ZKAppWrapper(typer.Typer):
    def __init__(self, console: Console | None = None) -> None:
        """
        Initialize a ZKAppWrapper object.

        Args:
            console (Console | None): Where tables are printed; stdout when None.

        Returns:
            None
        """
        super().__init__(
            name="zk",
            help="Regularized Zakharov-Kuznetsov solver and verification harness.",
            no_args_is_help=True,
            add_completion=False,
        )
        self.console: Console = console or Console()

        self.command("run")(self.run_command)
        self.command("sweep-eps")(self.sweep_eps_command)
        self.command("bvp")(self.bvp_command)
        self.command("verify")(self.verify_command)
        self.command("mms")(self.mms_command)
        self.command("horizon")(self.horizon_command)

    def _prepare(self, config_path: Path, threads: int | None, seed: int | None, verbose: bool) -> RunConfig:
        configure_logging(verbose)
        config: RunConfig = load_config(config_path)
        if threads is not None:
            document: dict = config.model_dump()
            document["run"]["threads"] = threads
            config = RunConfig.model_validate(document)
        if seed is not None:
            logger.debug("seed %d has no effect on deterministic runs", seed)
        return config

    def _execute(self, action: Callable[[], int]) -> None:
        """Run a command body and turn its outcome into the process exit code."""
        try:
            code: int = action()
        except ConfigError as exc:
            logger.error("configuration error: %s", exc)
            raise typer.Exit(code=EXIT_CONFIG) from exc
        except ValueError as exc:
            # grid and field errors derive from ValueError
            logger.error("invalid input: %s", exc)
            raise typer.Exit(code=EXIT_CONFIG) from exc
        except NumericalFaultError as exc:
            logger.error("numerical fault: %s", exc)
            raise typer.Exit(code=EXIT_NUMERICAL_FAULT) from exc
        raise typer.Exit(code=code)

    def run_command(
        self,
        config: ConfigOption,
        out: OutOption = None,
        threads: ThreadsOption = None,
        seed: SeedOption = None,
        verbose: VerboseOption = False,
    ) -> None:
        """Integrate one trajectory and write its diagnostics table."""

        def action() -> int:
            cfg: RunConfig = self._prepare(config, threads, seed, verbose)
            directory: Path = output_directory(cfg, out)
            trajectory: Trajectory = run_experiment(cfg, directory)
            last = trajectory.records[-1]
            table: Table = Table(title=f"run: {trajectory.status} at t = {trajectory.t_reached:.6g}")
            table.add_column("quantity")
            table.add_column("value", justify="right")
            for name in ("l2", "grad_l2", "xi_norm", "trace_ux0", "ut_l2"):
                table.add_row(name, _fmt(getattr(last, name)))
            table.add_row("steps", str(trajectory.steps_taken))
            table.add_row("output", str(directory))
            self.console.print(table)
            return EXIT_BLOWUP if trajectory.status == "blowup_suspected" else EXIT_OK

        self._execute(action)

    def sweep_eps_command(
        self,
        config: ConfigOption,
        out: OutOption = None,
        threads: ThreadsOption = None,
        seed: SeedOption = None,
        verbose: VerboseOption = False,
    ) -> None:
        """Run the problem for every [sweep] epsilon and compare consecutive members."""

        def action() -> int:
            cfg: RunConfig = self._prepare(config, threads, seed, verbose)
            if not cfg.sweep.epsilons:
                raise ConfigError("sweep-eps needs at least one epsilon", rule="subcommand")
            members, comparisons = sweep_eps(cfg, output_directory(cfg, out))
            table: Table = Table(title="epsilon sweep")
            for column in ("epsilon", "status", "t reached", "sup |u|", "int |grad u|^2 dt"):
                table.add_column(column, justify="right")
            for member in members:
                table.add_row(
                    _fmt(member.epsilon),
                    member.status,
                    _fmt(member.t_reached),
                    _fmt(member.sup_l2),
                    _fmt(member.grad_sq_time_integral),
                )
            self.console.print(table)
            pairs: Table = Table(title="|u(eps_a) - u(eps_b)| at the final time")
            for column in ("eps_a", "eps_b", "t", "difference"):
                pairs.add_column(column, justify="right")
            for item in comparisons:
                pairs.add_row(_fmt(item.epsilon_a), _fmt(item.epsilon_b), _fmt(item.t), _fmt(item.l2_difference))
            self.console.print(pairs)
            tripped: bool = any(member.status == "blowup_suspected" for member in members)
            return EXIT_BLOWUP if tripped else EXIT_OK

        self._execute(action)

    def bvp_command(
        self,
        config: ConfigOption,
        out: OutOption = None,
        threads: ThreadsOption = None,
        seed: SeedOption = None,
        verbose: VerboseOption = False,
    ) -> None:
        """Solve the two-point problem for every [bvp] epsilon."""

        def action() -> int:
            cfg: RunConfig = self._prepare(config, threads, seed, verbose)
            records, ratio, limit_gap = bvp_sweep(cfg, output_directory(cfg, out))
            table: Table = Table(title=f"two-point problem, N = {cfg.bvp.n}")
            for column in ("epsilon", "sup |u_xx|", "outer error", "layer width", "u_x(0)", "u_xx(1)", "u_xxx(1)"):
                table.add_column(column, justify="right")
            for entry in records:
                table.add_row(
                    _fmt(entry.epsilon),
                    _fmt(entry.sup_uxx),
                    _fmt(entry.err_outside_layer),
                    _fmt(entry.layer_width),
                    _fmt(entry.ux0),
                    _fmt(entry.uxx1),
                    _fmt(entry.uxxx1),
                )
            self.console.print(table)
            self.console.print(f"sup |u_xx| ratio across the sweep: {ratio:.6g}")
            self.console.print(f"eps = 0 solve against the closed-form limit: {limit_gap:.3e}")
            return EXIT_OK

        self._execute(action)

    def verify_command(
        self,
        config: ConfigOption,
        snapshots: Annotated[
            Path | None, typer.Option("--snapshots", help="Run directory holding snapshots.csv")
        ] = None,
        out: OutOption = None,
        threads: ThreadsOption = None,
        seed: SeedOption = None,
        verbose: VerboseOption = False,
    ) -> None:
        """Check balances, identities, the Riccati timescale and the gradient bound on a trajectory."""

        def action() -> int:
            cfg: RunConfig = self._prepare(config, threads, seed, verbose)
            source: Path | None = snapshots
            if source is not None and not (source / "snapshots.csv").is_file():
                raise ConfigError(f"{source} has no snapshots.csv", rule="subcommand")
            summary = verify_trajectory(cfg, source)
            table: Table = Table(title="verification")
            for column in ("check", "residual", "tolerance", "result"):
                table.add_column(column, justify="right")
            for report in summary.reports:
                table.add_row(
                    report.identity.value,
                    f"{report.residual:.3e}",
                    f"{report.tolerance:.1e}",
                    "pass" if report.passed else "FAIL",
                )
            if summary.gronwall is not None:
                table.add_row(
                    "riccati",
                    f"{summary.gronwall.max_growth_excess:.3e}",
                    f"horizon {summary.gronwall.horizon:.3g}",
                    "pass" if summary.gronwall.passed else "FAIL",
                )
            table.add_row(
                "gradient_bound",
                f"{len(summary.bound.failures)} failures",
                f"c' = {summary.bound.c_prime:g}",
                "pass" if summary.bound.passed else "FAIL",
            )
            self.console.print(table)
            replayed: Path | None = source or (
                Path(cfg.verify.snapshot_dir) if cfg.verify.snapshot_dir else None
            )
            target: Path = out or replayed or output_directory(cfg)
            target.mkdir(parents=True, exist_ok=True)
            (target / "verification.json").write_text(summary.model_dump_json(indent=2), encoding="utf-8")
            logger.info("verification summary written to %s", target / "verification.json")
            return EXIT_OK if summary.passed else EXIT_CHECK_FAILED

        self._execute(action)

    def mms_command(
        self,
        config: ConfigOption,
        out: OutOption = None,
        threads: ThreadsOption = None,
        seed: SeedOption = None,
        verbose: VerboseOption = False,
    ) -> None:
        """Manufactured-solution refinement ladder with observed orders."""

        def action() -> int:
            cfg: RunConfig = self._prepare(config, threads, seed, verbose)
            if cfg.mms.solution == "zero":
                raise ConfigError("mms needs a nonzero manufactured solution", rule="subcommand")
            results = mms_ladder(cfg, output_directory(cfg, out))
            table: Table = Table(title=f"manufactured solution {cfg.mms.solution}")
            for column in ("epsilon", "nx", "dt", "L2 error", "order"):
                table.add_column(column, justify="right")
            for entry in results:
                table.add_row(_fmt(entry.epsilon), str(entry.nx), _fmt(entry.dt), f"{entry.error:.3e}", _fmt(entry.order))
            self.console.print(table)
            return EXIT_OK

        self._execute(action)

    def horizon_command(
        self,
        config: ConfigOption,
        amplitudes: Annotated[
            list[float] | None, typer.Option("--amplitude", "-a", help="Initial amplitude; repeatable")
        ] = None,
        out: OutOption = None,
        threads: ThreadsOption = None,
        seed: SeedOption = None,
        verbose: VerboseOption = False,
    ) -> None:
        """Guard trigger times of the initial preset over an amplitude ladder."""

        def action() -> int:
            cfg: RunConfig = self._prepare(config, threads, seed, verbose)
            results = horizon_scan(cfg, amplitudes or [1.0, 2.0, 4.0], output_directory(cfg, out))
            table: Table = Table(title="existence horizon")
            for column in ("amplitude", "status", "t trigger", "mu", "c3 / mu^4"):
                table.add_column(column, justify="right")
            for entry in results:
                table.add_row(
                    _fmt(entry.amplitude),
                    entry.status,
                    _fmt(entry.t_trigger),
                    _fmt(entry.mu),
                    _fmt(entry.formula_horizon),
                )
            self.console.print(table)
            return EXIT_OK

        self._execute(action)

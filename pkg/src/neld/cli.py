"""Typer CLI application for the NELD simulator.

Commands:
    neld run --config PATH     Run the configured ensembles and write result tables
    neld verify [SUITE]        Run property suites (remap, lattice, potential, ou, drift, convergence, all)
    neld report DIR [DIR...]   Build report.tsv / report_long.tsv from run outputs

Exit codes: 0 success, 1 verification failure, 2 config or results error,
3 numerical blowup.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Annotated, Optional

import typer
from rich.console import Console
from rich.logging import RichHandler
from rich.panel import Panel
from rich.table import Table

from . import __version__
from .config import apply_overrides, load_config
from .ensemble import EnsembleRunner, write_outputs
from .exceptions import (
    ConfigError,
    FlowError,
    NonFiniteError,
    PotentialError,
    ResultsError,
)
from .report import build_report
from .schemas import Suite
from .verify import run_suite

EXIT_VERIFY_FAILED = 1
EXIT_USAGE = 2
EXIT_BLOWUP = 3

app = typer.Typer(
    name="neld",
    help="Nonequilibrium Langevin dynamics with lattice remapping.",
    no_args_is_help=True,
)
console = Console()
logger = logging.getLogger("neld")


def _setup_logging(verbose: bool) -> None:
    level = logging.DEBUG if verbose else logging.WARNING
    logger.handlers = [RichHandler(console=Console(stderr=True), show_path=False)]
    logger.setLevel(level)
    logger.propagate = False


# ---------------------------------------------------------------------------
# neld run
# ---------------------------------------------------------------------------

@app.command()
def run(
    config_path: Annotated[
        Path,
        typer.Option("--config", "-c", help="TOML run config"),
    ],
    seed: Annotated[
        Optional[int],
        typer.Option("--seed", help="Override sim.seed"),
    ] = None,
    threads: Annotated[
        Optional[int],
        typer.Option("--threads", help="Override run.threads"),
    ] = None,
    out: Annotated[
        Optional[Path],
        typer.Option("--out", help="Override run.output_dir"),
    ] = None,
) -> None:
    """Run the configured ensembles and write chain, series, profiles and summary tables."""
    try:
        config = apply_overrides(load_config(config_path), seed=seed, threads=threads, output_dir=out)
        runner = EnsembleRunner(config)
    except (ConfigError, FlowError, PotentialError) as exc:
        console.print(f"[red]Config error:[/red] {exc}")
        raise typer.Exit(EXIT_USAGE)

    try:
        outcome = runner.execute()
    except NonFiniteError as exc:
        console.print(
            f"[red]Numerical blowup:[/red] {exc}. "
            "Reduce the time step (raise sim.steps_per_period) or use the integrating_factor scheme."
        )
        raise typer.Exit(EXIT_BLOWUP)

    written = write_outputs(outcome, config.run.output_dir)
    console.print(
        Panel(
            "\n".join(str(path) for path in written),
            title=f"[bold green]Run complete[/bold green] (seed {config.sim.seed})",
        )
    )


# ---------------------------------------------------------------------------
# neld verify
# ---------------------------------------------------------------------------

@app.command()
def verify(
    suite: Annotated[
        Suite,
        typer.Argument(help="Suite to run", case_sensitive=False),
    ] = Suite.ALL,
) -> None:
    """Run property suites and print pass/fail with measured residuals."""
    results = run_suite(suite)

    table = Table(title="Verification")
    table.add_column("Suite", style="bold")
    table.add_column("Check")
    table.add_column("Measured", justify="right")
    table.add_column("Threshold", justify="right")
    table.add_column("Result")
    failed = 0
    for name, checks in results.items():
        for check in checks:
            failed += not check.passed
            table.add_row(
                name.value,
                check.name,
                f"{check.measured:.6g}",
                f"{check.relation} {check.threshold:.6g}",
                "[green]pass[/green]" if check.passed else "[red]FAIL[/red]",
            )
    console.print(table)

    if failed:
        console.print(f"[red]{failed} check(s) failed.[/red]")
        raise typer.Exit(EXIT_VERIFY_FAILED)
    console.print("[green]All checks passed.[/green]")


# ---------------------------------------------------------------------------
# neld report
# ---------------------------------------------------------------------------

@app.command()
def report(
    directories: Annotated[
        list[Path],
        typer.Argument(help="Run output directories"),
    ],
    out: Annotated[
        Optional[Path],
        typer.Option("--out", help="Where to write the report (defaults to the first directory)"),
    ] = None,
) -> None:
    """Emit a summary table and a plot-ready long table from run outputs."""
    try:
        written = build_report(directories, out or directories[0])
    except ResultsError as exc:
        console.print(f"[red]Results error:[/red] {exc}")
        raise typer.Exit(EXIT_USAGE)
    for path in written:
        console.print(f"[green]Wrote {path}[/green]")


# ---------------------------------------------------------------------------
# Version callback
# ---------------------------------------------------------------------------

def _version_callback(value: bool) -> None:
    if value:
        console.print(f"neld v{__version__}")
        raise typer.Exit()


@app.callback()
def main(
    version: Annotated[
        Optional[bool],
        typer.Option("--version", "-v", callback=_version_callback, is_eager=True),
    ] = None,
    verbose: Annotated[
        bool,
        typer.Option("--verbose", "-V", help="Debug logging"),
    ] = False,
) -> None:
    """Nonequilibrium Langevin dynamics with lattice remapping."""
    _setup_logging(verbose)

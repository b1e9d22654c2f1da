"""Main CLI entry point for hbfopt."""

from __future__ import annotations

import logging
import time
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional

import typer
from rich.console import Console
from rich.progress import BarColumn, Progress, SpinnerColumn, TextColumn
from rich.table import Table

from .channel import generate_channel, write_channel_dump
from .config import ExperimentSpec, parse_override_value
from .errors import (
    ChannelError,
    ConfigurationError,
    InvariantViolation,
    MonotonicityViolation,
    ReportingError,
)
from .experiment import (
    REFERENCE_ITERATION_COUNTS,
    ExperimentResult,
    complexity_estimate,
    expected_row_count,
    run_experiment,
)
from .reporting import emit, load_manifest
from .selftest import run_selftest
from .utils import format_duration, setup_logging
from .variants import AlgorithmVariant

EXIT_SPEC_ERROR = 1
EXIT_IO_ERROR = 2
EXIT_INVARIANT_ABORT = 3

app = typer.Typer(
    add_completion=False,
    help="Hybrid analog/digital beamforming optimization for partially-connected mmWave MIMO-OFDM.",
)
console = Console()
logger = logging.getLogger(__name__)


def parse_overrides(args: List[str]) -> Dict[str, Any]:
    """Turn ``--key value`` / ``--key=value`` pairs into a field -> value mapping."""
    overrides: Dict[str, Any] = {}
    index = 0
    while index < len(args):
        token = args[index]
        if not token.startswith("--") or len(token) == 2:
            raise ConfigurationError(f"Unexpected argument '{token}'", code="BAD_OVERRIDE")
        key, sep, raw = token[2:].partition("=")
        if not sep:
            following = args[index + 1] if index + 1 < len(args) else None
            if following is None or following.startswith("--"):
                raw = "true"
            else:
                raw = following
                index += 1
        overrides[key] = parse_override_value(raw)
        index += 1
    return overrides


def load_spec(spec_file: Path, overrides: Dict[str, Any]) -> ExperimentSpec:
    """Read a TOML spec (with HBFOPT_* environment overrides) or a run manifest."""
    if spec_file.suffix.lower() == ".json":
        try:
            spec = load_manifest(spec_file)
        except ReportingError as exc:
            raise ConfigurationError(str(exc), code=exc.code, details=exc.details) from exc
    else:
        if not spec_file.exists():
            raise ConfigurationError(f"Spec file not found: {spec_file}", code="SPEC_MISSING")
        spec = ExperimentSpec.from_env(spec_file)
    return spec.with_overrides(overrides) if overrides else spec


def _default_run_dir(spec: ExperimentSpec) -> Path:
    return spec.output_dir / datetime.now().strftime("%Y%m%d_%H%M%S")


def display_summary(result: ExperimentResult, run_dir: Path, elapsed: float) -> None:
    """Display mean rates per variant next to the fully-digital baseline."""
    means = result.mean_rates()
    fd_means = result.mean_fd_rates()
    series = sorted({(variant, quant) for variant, quant, _ in means})

    table = Table(title="Mean rate (bits/s/Hz)")
    table.add_column("SNR (dB)", style="cyan", justify="right")
    table.add_column("FD-BF", style="green", justify="right")
    for variant, quant in series:
        table.add_column(variant if quant == "inf" else f"{variant} ({quant}b)", justify="right")
    for snr in sorted(fd_means):
        cells = [f"{means[(v, q, snr)]:.3f}" if (v, q, snr) in means else "-" for v, q in series]
        table.add_row(f"{snr:g}", f"{fd_means[snr]:.3f}", *cells)
    console.print(table)

    flagged = sum(1 for row in result.rows if row.flags)
    console.print(f"Rows: {len(result.rows)} ({flagged} flagged), elapsed {format_duration(elapsed)}")
    console.print(f"Results saved to: [green]{run_dir}[/green]")


@app.command(context_settings={"allow_extra_args": True, "ignore_unknown_options": True})
def run(
    ctx: typer.Context,
    spec_file: Path = typer.Argument(..., help="Experiment spec (TOML) or a manifest.json of an earlier run"),
    output_dir: Optional[Path] = typer.Option(None, "--output-dir", "-o", help="Folder for run directories"),
    run_dir: Optional[Path] = typer.Option(None, "--run-dir", help="Write outputs here instead of a timestamped folder"),
    debug: bool = typer.Option(False, "--debug", help="Enable debug logging"),
    concurrency: Optional[int] = typer.Option(None, "--concurrency", "-c", help="Realizations processed concurrently"),
    no_summary: bool = typer.Option(False, "--no-summary", help="Skip the Markdown summary"),
    log_file: Optional[Path] = typer.Option(None, "--log-file", help="Also write debug logs to this file"),
):
    """Run a seeded sweep; extra ``--key value`` pairs override spec fields."""

    setup_logging(debug=debug, log_file=log_file)

    try:
        overrides = parse_overrides(list(ctx.args))
        if output_dir is not None:
            overrides["output_dir"] = str(output_dir)
        if concurrency is not None:
            overrides["concurrency"] = concurrency
        if debug:
            overrides["debug"] = True
        spec = load_spec(spec_file, overrides)
    except ConfigurationError as exc:
        console.print(f"[red]✗[/red] Invalid spec: {exc}")
        raise typer.Exit(EXIT_SPEC_ERROR) from exc

    if spec.debug and not debug:
        setup_logging(debug=True, log_file=log_file)
    target_dir = run_dir or _default_run_dir(spec)

    console.print("[bold blue]hbfopt[/bold blue] - Starting sweep")
    console.print(
        f"{spec.n_realizations} realizations, {len(spec.snr_grid)} SNRs, "
        f"{len(spec.variants)} variants -> {expected_row_count(spec)} rows"
    )

    started = time.perf_counter()
    try:
        with Progress(
            SpinnerColumn(),
            TextColumn("[progress.description]{task.description}"),
            BarColumn(bar_width=None),
            TextColumn("{task.completed}/{task.total}", justify="right"),
            console=console,
        ) as progress:
            task = progress.add_task("Optimizing realizations...", total=spec.n_realizations)
            completed = 0

            def update(_: int) -> None:
                nonlocal completed
                completed += 1
                progress.update(task, completed=completed)

            result = run_experiment(spec, progress_callback=update)
    except (ConfigurationError, ChannelError) as exc:
        console.print(f"[red]✗[/red] Invalid spec: {exc}")
        raise typer.Exit(EXIT_SPEC_ERROR) from exc
    except (InvariantViolation, MonotonicityViolation) as exc:
        logger.error("Sweep aborted: %s", exc)
        console.print(f"[red]✗[/red] Internal invariant abort: {exc}")
        raise typer.Exit(EXIT_INVARIANT_ABORT) from exc

    try:
        output_files = emit(result, spec, target_dir, summary=not no_summary)
    except ReportingError as exc:
        console.print(f"[red]✗[/red] Could not write results ({exc.details.get('path') if exc.details else target_dir}): {exc}")
        raise typer.Exit(EXIT_IO_ERROR) from exc

    display_summary(result, target_dir, time.perf_counter() - started)
    console.print("\n[bold]Output Files:[/bold]")
    for file_type, file_path in output_files.items():
        if file_path is not None:
            console.print(f"  [green]•[/green] {file_type}: {file_path}")

    if result.aborted:
        console.print("[red]✗[/red] At least one run aborted on a monotonicity violation (see flags)")
        raise typer.Exit(EXIT_INVARIANT_ABORT)


@app.command("channel-dump")
def channel_dump(
    output: Path = typer.Option(..., "--output", "-o", help="Destination of the binary dump"),
    seed: int = typer.Option(0, "--seed", help="Channel seed"),
    spec_file: Optional[Path] = typer.Option(None, "--spec", help="Spec providing the system geometry"),
    debug: bool = typer.Option(False, "--debug", help="Enable debug logging"),
):
    """Generate one channel realization and write it in the binary dump format."""

    setup_logging(debug=debug)
    try:
        spec = load_spec(spec_file, {}) if spec_file else ExperimentSpec()
        realization = generate_channel(spec.system, seed)
    except (ConfigurationError, ChannelError) as exc:
        console.print(f"[red]✗[/red] Invalid spec: {exc}")
        raise typer.Exit(EXIT_SPEC_ERROR) from exc
    try:
        write_channel_dump(realization, output)
    except ReportingError as exc:
        console.print(f"[red]✗[/red] {exc}")
        raise typer.Exit(EXIT_IO_ERROR) from exc

    K, M, N = realization.matrices.shape
    console.print(f"[green]✓[/green] Wrote {K} subcarriers of {M}x{N} channels (seed {seed}) to {output}")


@app.command()
def complexity(
    n_ant: int = typer.Option(32, "--n-ant", help="Antennas of the optimized side"),
    n_rf: int = typer.Option(4, "--n-rf", help="RF chains of the optimized side"),
    subcarriers: int = typer.Option(64, "--subcarriers", "-k", help="Number of subcarriers"),
    variant: Optional[str] = typer.Option(None, "--variant", help="Single variant; default lists the reference set"),
    n_in: Optional[float] = typer.Option(None, "--n-in", help="Average inner iterations"),
    n_out: Optional[float] = typer.Option(None, "--n-out", help="Average outer iterations"),
    n_g: Optional[float] = typer.Option(None, "--n-g", help="Average objective evaluations per line search"),
):
    """Estimate complex multiplications of the analog-precoder optimization."""

    try:
        if variant is None:
            variants = [AlgorithmVariant(kind) for kind in REFERENCE_ITERATION_COUNTS]
        else:
            variants = [AlgorithmVariant.parse(variant)]

        table = Table(title=f"Complex multiplications (N={n_ant}, N_RF={n_rf}, K={subcarriers})")
        table.add_column("Variant", style="cyan")
        table.add_column("N_in", justify="right")
        table.add_column("N_out", justify="right")
        table.add_column("N_g", justify="right")
        table.add_column("Multiplications", style="green", justify="right")
        for item in variants:
            reference = REFERENCE_ITERATION_COUNTS.get(item.kind)
            inner = n_in if n_in is not None else (reference.n_in if reference else None)
            outer = n_out if n_out is not None else (reference.n_out if reference else None)
            searches = n_g if n_g is not None else (reference.n_g if reference else None)
            if inner is None or outer is None:
                raise ConfigurationError(f"{item} needs --n-in and --n-out", code="BAD_COMPLEXITY_INPUT")
            value = complexity_estimate(n_ant, n_rf, subcarriers, item, inner, outer, searches)
            table.add_row(str(item), f"{inner:g}", f"{outer:g}", "-" if searches is None else f"{searches:g}", f"{value:.3e}")
    except ConfigurationError as exc:
        console.print(f"[red]✗[/red] {exc}")
        raise typer.Exit(EXIT_SPEC_ERROR) from exc

    console.print(table)


@app.command()
def selftest(
    seed: int = typer.Option(0, "--seed", help="Seed of the check instances"),
    debug: bool = typer.Option(False, "--debug", help="Enable debug logging"),
):
    """Run the built-in invariant checks on small seeded instances."""

    setup_logging(debug=debug)
    results = run_selftest(seed)

    table = Table(title="Self-test")
    table.add_column("Check", style="cyan")
    table.add_column("Result")
    table.add_column("Detail")
    for result in results:
        status = "[green]pass[/green]" if result.passed else "[red]FAIL[/red]"
        table.add_row(result.name, status, result.detail)
    console.print(table)

    failed = [result.name for result in results if not result.passed]
    if failed:
        console.print(f"[red]✗[/red] {len(failed)} check(s) failed: {', '.join(failed)}")
        raise typer.Exit(EXIT_INVARIANT_ABORT)
    console.print("[green]✓[/green] All checks passed")


if __name__ == "__main__":
    app()

"""Seeded experiment sweeps and the multiplication-count estimator."""

from __future__ import annotations

import asyncio
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, NamedTuple, Optional

from pydantic import ValidationError

from .channel import generate_channel
from .config import ExperimentSpec, SystemConfig
from .driver import fd_baseline, run_variant
from .errors import ConfigurationError, HybridBeamformingError, InvariantViolation, MonotonicityViolation
from .metrics import reported_rate
from .models import ConvergenceTrace, ExitReason, ResultRow
from .variants import AlgorithmVariant, VariantKind

logger = logging.getLogger(__name__)

FLAG_DEGENERATE = "degenerate"
FLAG_MAX_ITERATIONS = "max_iterations"
FLAG_ROLLED_BACK = "rolled_back"
FLAG_MONOTONICITY_ABORT = "monotonicity_abort"
FLAG_SOLVER_ERROR = "solver_error"


class IterationCounts(NamedTuple):
    n_in: float
    n_out: float
    n_g: Optional[float] = None


# Averaged inner/outer/line-search counts over 100 realizations of the
# 32-antenna, 4-chain, 64-subcarrier system.
REFERENCE_ITERATION_COUNTS: Dict[VariantKind, IterationCounts] = {
    VariantKind.WMMSE_EI: IterationCounts(n_in=3.0, n_out=10.0, n_g=8.1),
    VariantKind.WMMSE_MO: IterationCounts(n_in=21.2, n_out=10.0),
    VariantKind.MMSE_EI: IterationCounts(n_in=4.0, n_out=5.2),
}


def complexity_estimate(
    n_ant: int,
    n_rf: int,
    n_subcarriers: int,
    variant: AlgorithmVariant,
    n_in: float,
    n_out: float,
    n_g: Optional[float] = None,
) -> float:
    """Complex multiplications of one analog-precoder optimization run.

    ``n_g`` is the number of objective evaluations per element line search
    (EI variants). Quantized EI evaluates every point of the phase set, so
    it defaults to 2^B there.
    """
    if min(n_ant, n_rf, n_subcarriers, n_in, n_out) <= 0:
        raise ConfigurationError("complexity inputs must be positive", code="BAD_COMPLEXITY_INPUT")

    N, R, K = float(n_ant), float(n_rf), float(n_subcarriers)
    kind = variant.kind
    if kind in {VariantKind.WMMSE_EI, VariantKind.WMMSE_EI_Q}:
        if n_g is None:
            if kind is VariantKind.WMMSE_EI:
                raise ConfigurationError("WMMSE-EI needs the line-search count n_g", code="BAD_COMPLEXITY_INPUT")
            n_g = float(2**variant.bits)
        per_element = (
            2 * N**2 * R + 3 * N * R**2 + 4 * N**2 + 2 * N + 3 * R**3 - R**2 - N * R + n_g + 2 * R**3
        )
        return n_out * n_in * N * K * per_element
    if kind in {VariantKind.WMMSE_MO, VariantKind.WMMSE_MO_U}:
        per_iteration = K * (5 * N**2 * R + 6 * N * R**2 + 4 * R**3 + 4 * R**3) + 3 * N * R + N
        return n_out * n_in * per_iteration
    per_sweep = K * (2 * N**2 * R + 3 * N * R**2 + R**3 + R**3) + N**2
    return n_out * n_in * per_sweep


def trace_key(variant: AlgorithmVariant, snr_db: float, seed: int) -> str:
    return f"{variant}_snr{snr_db:g}_seed{seed}".replace(":", "-q")


@dataclass
class ExperimentResult:
    rows: List[ResultRow] = field(default_factory=list)
    traces: Dict[str, ConvergenceTrace] = field(default_factory=dict)

    @property
    def aborted(self) -> bool:
        return any(FLAG_MONOTONICITY_ABORT in row.flags for row in self.rows)

    def mean_rates(self) -> Dict[tuple, float]:
        """Mean hybrid rate per (variant, quant label, snr)."""
        sums: Dict[tuple, List[float]] = {}
        for row in self.rows:
            sums.setdefault((row.variant, row.quant_label, row.snr_db), []).append(row.rate)
        return {key: sum(values) / len(values) for key, values in sums.items()}

    def mean_fd_rates(self) -> Dict[float, float]:
        sums: Dict[float, List[float]] = {}
        for row in self.rows:
            sums.setdefault(row.snr_db, []).append(row.fd_rate)
        return {snr: sum(values) / len(values) for snr, values in sums.items()}


class _Outcome(NamedTuple):
    rate: float
    outer_iters: int
    wall_ms: float
    flags: List[str]
    trace: Optional[ConvergenceTrace]


def _solve(channel, config: SystemConfig, variant: AlgorithmVariant, spec: ExperimentSpec, seed: int) -> _Outcome:
    started = time.perf_counter()
    try:
        outcome = run_variant(channel, config, variant, spec.init_strategy, seed)
    except MonotonicityViolation as exc:
        logger.warning("Monotonicity abort for %s seed=%d snr=%g: %s", variant, seed, config.snr_db, exc)
        details = exc.details or {}
        state = details.get("state")
        trace = details.get("trace")
        rate = reported_rate(channel, state, config).bits if state is not None else 0.0
        outer = trace.outer_iterations if trace is not None else 0
        return _Outcome(rate, outer, _elapsed(started, spec), [FLAG_MONOTONICITY_ABORT], trace)
    except HybridBeamformingError as exc:
        logger.warning("Solver error for %s seed=%d snr=%g: [%s] %s", variant, seed, config.snr_db, exc.code, exc)
        return _Outcome(0.0, 0, _elapsed(started, spec), [FLAG_SOLVER_ERROR], None)

    flags = []
    if outcome.degenerate:
        flags.append(FLAG_DEGENERATE)
    if outcome.trace.exit_reason is ExitReason.MAX_ITERATIONS:
        flags.append(FLAG_MAX_ITERATIONS)
    if outcome.trace.rolled_back:
        flags.append(FLAG_ROLLED_BACK)
    return _Outcome(outcome.rate, outcome.trace.outer_iterations, _elapsed(started, spec), flags, outcome.trace)


def _elapsed(started: float, spec: ExperimentSpec) -> float:
    return (time.perf_counter() - started) * 1000.0 if spec.record_wall_time else 0.0


def _make_row(variant: AlgorithmVariant, seed: int, snr_db: float, outcome: _Outcome, fd_rate: float) -> ResultRow:
    try:
        return ResultRow(
            variant=variant.label,
            seed=seed,
            snr_db=snr_db,
            quant_bits=variant.bits,
            outer_iters=outcome.outer_iters,
            rate=outcome.rate,
            fd_rate=fd_rate,
            wall_ms=outcome.wall_ms,
            flags=list(outcome.flags),
        )
    except ValidationError as exc:
        raise InvariantViolation(
            f"Result row for {variant} seed={seed} snr={snr_db:g} is invalid: {exc}",
            code="INVALID_ROW",
            details={"variant": str(variant), "seed": seed, "snr_db": snr_db},
        ) from exc


def run_realization(spec: ExperimentSpec, index: int) -> ExperimentResult:
    """Every (snr, bits, variant) run on realization ``index``; one channel is shared by all."""
    seed = spec.system.seed + index
    channel = generate_channel(spec.system, seed)
    result = ExperimentResult()
    grid = spec.quant_grid or [None]

    for snr_db in spec.snr_grid:
        config = spec.system.with_snr(snr_db)
        fd_rate = fd_baseline(channel, config)
        # Variants whose bits do not follow the grid run once and are replicated.
        solved: Dict[AlgorithmVariant, _Outcome] = {}
        for bits in grid:
            for variant in spec.resolved_variants(bits):
                if variant in solved:
                    outcome = solved[variant]
                else:
                    outcome = solved[variant] = _solve(channel, config, variant, spec, seed)
                    if spec.write_traces and outcome.trace is not None:
                        result.traces[trace_key(variant, snr_db, seed)] = outcome.trace
                result.rows.append(_make_row(variant, seed, snr_db, outcome, fd_rate))

    logger.debug("Realization %d (seed %d) produced %d rows", index, seed, len(result.rows))
    return result


async def run_experiment_async(
    spec: ExperimentSpec,
    progress_callback: Optional[Callable[[int], None]] = None,
) -> ExperimentResult:
    semaphore = asyncio.Semaphore(max(spec.concurrency, 1))

    async def process(index: int) -> tuple[int, ExperimentResult]:
        async with semaphore:
            partial = await asyncio.to_thread(run_realization, spec, index)
        if progress_callback:
            progress_callback(index)
        return index, partial

    tasks = [asyncio.create_task(process(index)) for index in range(spec.n_realizations)]
    partials: List[Optional[ExperimentResult]] = [None] * len(tasks)
    try:
        for coro in asyncio.as_completed(tasks):
            index, partial = await coro
            partials[index] = partial
    except BaseException:
        for task in tasks:
            if not task.done():
                task.cancel()
        await asyncio.gather(*tasks, return_exceptions=True)
        raise

    merged = ExperimentResult()
    for partial in partials:
        merged.rows.extend(partial.rows)
        merged.traces.update(partial.traces)
    merged.rows.sort(key=ResultRow.sort_key)
    merged.traces = dict(sorted(merged.traces.items()))
    return merged


def run_experiment(
    spec: ExperimentSpec,
    progress_callback: Optional[Callable[[int], None]] = None,
) -> ExperimentResult:
    """Run the full sweep; rows are sorted so concurrency never changes the output."""
    logger.info(
        "Running %d realizations x %d SNRs x %d variants",
        spec.n_realizations,
        len(spec.snr_grid),
        len(spec.variants),
    )
    return asyncio.run(run_experiment_async(spec, progress_callback))


def expected_row_count(spec: ExperimentSpec) -> int:
    return len(spec.snr_grid) * len(spec.variants) * spec.n_realizations * max(1, len(spec.quant_grid))

"""Invariant checks runnable from the command line."""

from __future__ import annotations

import logging
from typing import Callable, List, NamedTuple

import numpy as np

from .analog import (
    SubproblemSide,
    build_subproblem,
    ei_coefficients,
    euclidean_gradient_matrix,
    objective,
    objective_matrix,
)
from .beamformers import AnalogBeamformer, Side
from .channel import generate_channel, make_rng
from .config import ClusterParams, SolverControls, SystemConfig
from .digital import mmse_bound_matrix, mmse_objective, mmse_upper_bound, precoder_aux, update_combiners, update_weights
from .driver import alternating_optimize, initialize
from .errors import HybridBeamformingError
from .experiment import REFERENCE_ITERATION_COUNTS, complexity_estimate
from .metrics import equivalence_gap
from .variants import AlgorithmVariant, InitStrategy, VariantKind

logger = logging.getLogger(__name__)

SELFTEST_SYSTEM = SystemConfig(
    n_tx=16,
    n_rx=8,
    n_tx_rf=4,
    n_rx_rf=2,
    n_streams=2,
    n_subcarriers=8,
    snr_db=-6.0,
    cluster=ClusterParams(n_clusters=3, n_rays=4),
    controls=SolverControls(outer_cap=8),
)

# Expected multiplication counts for 32 antennas, 4 chains, 64 subcarriers.
REFERENCE_COMPLEXITY = {
    VariantKind.WMMSE_EI: 9.0e8,
    VariantKind.WMMSE_MO: 3.3e8,
    VariantKind.MMSE_EI: 1.3e7,
}


class CheckResult(NamedTuple):
    name: str
    passed: bool
    detail: str


def _random_state(config: SystemConfig, seed: int):
    channel = generate_channel(config, seed)
    state = initialize(channel, config, InitStrategy.RANDOM, seed)
    state = update_combiners(channel, state, config)
    return channel, update_weights(channel, state, config)


def finite_difference_gradient(f: Callable[[np.ndarray], float], X: np.ndarray, mask: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central differences ∂f/∂Re X + j ∂f/∂Im X on the entries selected by ``mask``."""
    gradient = np.zeros_like(X)
    for index in zip(*np.nonzero(mask)):
        step = np.zeros_like(X)
        step[index] = h
        d_re = (f(X + step) - f(X - step)) / (2 * h)
        step[index] = 1j * h
        d_im = (f(X + step) - f(X - step)) / (2 * h)
        gradient[index] = d_re + 1j * d_im
    return gradient


def check_equivalence(seed: int) -> CheckResult:
    gaps = []
    for offset in range(5):
        channel, state = _random_state(SELFTEST_SYSTEM, seed + offset)
        gaps.append(equivalence_gap(channel, state, SELFTEST_SYSTEM))
    worst = max(gaps)
    return CheckResult("rate equivalence", worst < 1e-8, f"max gap {worst:.2e} bits/s/Hz")


def check_gradients(seed: int) -> CheckResult:
    worst = 0.0
    off_block = 0.0
    for offset in range(3):
        channel, state = _random_state(SELFTEST_SYSTEM, seed + offset)
        for side, x in ((SubproblemSide.PRECODER, state.f_rf), (SubproblemSide.COMBINER, state.w_rf)):
            sub = build_subproblem(side, channel, state, SELFTEST_SYSTEM)
            X = x.expand()
            analytic = euclidean_gradient_matrix(sub, X)
            numeric = finite_difference_gradient(lambda Y: objective_matrix(sub, Y), X, sub.mask)
            worst = max(worst, float(np.linalg.norm(analytic - numeric) / np.linalg.norm(numeric)))
            off_block = max(off_block, float(np.max(np.abs(analytic[~sub.mask]))))
    passed = worst < 1e-5 and off_block == 0.0
    return CheckResult("gradient vs finite differences", passed, f"max relative error {worst:.2e}")


def check_element_function(seed: int) -> CheckResult:
    channel, state = _random_state(SELFTEST_SYSTEM, seed)
    worst = 0.0
    grid = 2 * np.pi * np.arange(8) / 8
    for side, x in ((SubproblemSide.PRECODER, state.f_rf), (SubproblemSide.COMBINER, state.w_rf)):
        sub = build_subproblem(side, channel, state, SELFTEST_SYSTEM)
        for q in range(x.n_rf):
            p = q * x.block
            scalar = ei_coefficients(sub, x, q, p)
            for theta in grid:
                direct = objective(sub, x.with_phase(q, p, float(theta)))
                worst = max(worst, abs(scalar.objective_at(theta) - direct))
    return CheckResult("element scalar function", worst < 1e-8, f"max deviation {worst:.2e}")


def check_power(seed: int) -> CheckResult:
    channel, state = _random_state(SELFTEST_SYSTEM, seed)
    power = np.sum(np.abs(state.f_d) ** 2, axis=(1, 2))
    budget = SELFTEST_SYSTEM.n_tx_rf / SELFTEST_SYSTEM.n_tx
    worst = float(np.max(np.abs(power - budget)))
    return CheckResult("digital precoder power", worst < 1e-10, f"max deviation {worst:.2e}")


def check_upper_bound(seed: int) -> CheckResult:
    config = SELFTEST_SYSTEM
    channel = generate_channel(config, seed)
    state = initialize(channel, config, InitStrategy.RANDOM, seed)
    state = state.replace(weights=np.broadcast_to(np.eye(config.n_streams, dtype=complex), state.weights.shape).copy())
    aux = precoder_aux(channel, state, config)
    bound = mmse_bound_matrix(aux, config)
    rng = make_rng(seed, stream=2)
    violations = 0
    for _ in range(20):
        f_rf = AnalogBeamformer.random(Side.TX, config.n_tx, config.n_tx_rf, rng)
        if mmse_objective(aux, f_rf) > mmse_upper_bound(bound, f_rf, config.n_subcarriers) + 1e-9:
            violations += 1
    return CheckResult("MMSE upper bound", violations == 0, f"{violations} violations in 20 draws")


def check_complexity(seed: int) -> CheckResult:
    details = []
    passed = True
    for kind, reference in REFERENCE_COMPLEXITY.items():
        counts = REFERENCE_ITERATION_COUNTS[kind]
        value = complexity_estimate(32, 4, 64, AlgorithmVariant(kind), counts.n_in, counts.n_out, counts.n_g)
        deviation = abs(value - reference) / reference
        passed = passed and deviation < 0.05
        details.append(f"{kind.value} {value:.2e}")
    return CheckResult("complexity figures", passed, ", ".join(details))


def check_monotonicity(seed: int) -> CheckResult:
    config = SELFTEST_SYSTEM
    channel = generate_channel(config, seed)
    init = initialize(channel, config, InitStrategy.RANDOM, seed)
    counts = []
    for kind in (VariantKind.WMMSE_EI, VariantKind.WMMSE_MO):
        _, trace = alternating_optimize(channel, config, AlgorithmVariant(kind), init)
        counts.append(trace.objective_violations() + trace.rate_violations())
    return CheckResult("trace monotonicity", sum(counts) == 0, f"{sum(counts)} violations")


CHECKS = (
    check_equivalence,
    check_gradients,
    check_element_function,
    check_power,
    check_upper_bound,
    check_complexity,
    check_monotonicity,
)


def run_selftest(seed: int = 0) -> List[CheckResult]:
    """Run every check; a check that raises is reported as failed."""
    results = []
    for check in CHECKS:
        try:
            result = check(seed)
        except HybridBeamformingError as exc:
            result = CheckResult(check.__name__.removeprefix("check_").replace("_", " "), False, f"[{exc.code}] {exc}")
        logger.debug("Selftest %s: %s (%s)", result.name, "ok" if result.passed else "FAILED", result.detail)
        results.append(result)
    return results

"""Alternating optimization over analog/digital precoders, combiners and weights."""

from __future__ import annotations

import logging
from typing import NamedTuple, Optional

import numpy as np

from .analog import (
    AnalogSubproblem,
    SubproblemSide,
    bound_matrix,
    bound_solve,
    build_subproblem,
    ei_solve,
    mo_solve,
    objective as analog_objective,
)
from .beamformers import AnalogBeamformer, HybridState, Side, check_state
from .channel import ChannelRealization, make_rng
from .config import SolverControls, SystemConfig
from .digital import default_digital_precoder, update_combiners, update_precoders, update_weights
from .errors import MonotonicityViolation
from .metrics import LN2, reported_rate, wmmse_objective
from .models import ConvergenceTrace, ExitReason, StepLabel, TraceStep
from .variants import AlgorithmVariant, InitStrategy, StepOrder, VariantKind, mmse_counterpart

logger = logging.getLogger(__name__)

INIT_STREAM = 1


class RunOutcome(NamedTuple):
    state: HybridState
    trace: ConvergenceTrace
    rate: float
    degenerate: bool


def initialize(
    channel: ChannelRealization,
    config: SystemConfig,
    strategy: InitStrategy,
    seed: int,
    *,
    bits: Optional[int] = None,
    controls: Optional[SolverControls] = None,
) -> HybridState:
    """Starting state; ``bits`` restricts initial phases to the 2^B set."""
    strategy = InitStrategy(strategy)
    K, n_s = config.n_subcarriers, config.n_streams

    rng = make_rng(seed, stream=INIT_STREAM)
    f_rf = AnalogBeamformer.random(Side.TX, config.n_tx, config.n_tx_rf, rng, bits)
    w_rf = AnalogBeamformer.random(Side.RX, config.n_rx, config.n_rx_rf, rng, bits)
    w_d = np.zeros((K, config.n_rx_rf, n_s), dtype=complex)
    w_d[:, :n_s, :n_s] = np.eye(n_s)
    state = HybridState(
        f_rf=f_rf,
        w_rf=w_rf,
        f_d=default_digital_precoder(config),
        w_d=w_d,
        xi=np.ones(K),
        weights=np.broadcast_to(np.eye(n_s, dtype=complex), (K, n_s, n_s)).copy(),
    )
    state = update_precoders(channel, state, config)
    if strategy is InitStrategy.RANDOM:
        return state

    warm_variant = mmse_counterpart(AlgorithmVariant(VariantKind.WMMSE_EI_Q, bits) if bits else AlgorithmVariant(VariantKind.WMMSE_EI))
    warm, _ = alternating_optimize(channel, config, warm_variant, state, controls)
    return update_weights(channel, warm, config)


def _analog_update(
    sub: AnalogSubproblem,
    current: AnalogBeamformer,
    variant: AlgorithmVariant,
    controls: SolverControls,
) -> AnalogBeamformer:
    if not variant.weighted:
        candidate, _ = bound_solve(bound_matrix(sub), current, controls.ei_sweep_cap, variant.search_bits)
    elif variant.uses_manifold:
        candidate = mo_solve(sub, current, controls.mo_iter_cap, controls.mo_grad_tol).beamformer
    else:
        candidate = ei_solve(
            sub,
            current,
            controls.ei_sweep_cap,
            controls.ei_rel_tol,
            controls.line_search_tol,
            variant.search_bits,
        ).beamformer
    if analog_objective(sub, candidate) > analog_objective(sub, current):
        logger.debug("Rejected %s analog update that raised the objective", sub.side.value)
        return current
    return candidate


def _precoder_step(channel, state, config, variant, controls) -> HybridState:
    sub = build_subproblem(SubproblemSide.PRECODER, channel, state, config)
    f_rf = _analog_update(sub, state.f_rf, variant, controls)
    return update_precoders(channel, state.replace(f_rf=f_rf), config)


def _combiner_step(channel, state, config, variant, controls) -> HybridState:
    sub = build_subproblem(SubproblemSide.COMBINER, channel, state, config)
    w_rf = _analog_update(sub, state.w_rf, variant, controls)
    return update_combiners(channel, state.replace(w_rf=w_rf), config)


def _weight_step(channel, state, config, variant, controls) -> HybridState:
    return update_weights(channel, state, config)


_STEPS = {
    StepLabel.S1_PRECODER: _precoder_step,
    StepLabel.S2_COMBINER: _combiner_step,
    StepLabel.S3_WEIGHTS: _weight_step,
}


def step_sequence(order: StepOrder, weighted: bool) -> list[StepLabel]:
    if order is StepOrder.COMBINER_FIRST:
        labels = [StepLabel.S2_COMBINER, StepLabel.S3_WEIGHTS, StepLabel.S1_PRECODER]
    else:
        labels = [StepLabel.S1_PRECODER, StepLabel.S2_COMBINER, StepLabel.S3_WEIGHTS]
    if not weighted:
        labels.remove(StepLabel.S3_WEIGHTS)
    return labels


def _quantize_at_exit(channel, state, config, bits: int) -> HybridState:
    state = state.replace(f_rf=state.f_rf.quantized(bits), w_rf=state.w_rf.quantized(bits))
    state = update_precoders(channel, state, config)
    return update_combiners(channel, state, config)


def alternating_optimize(
    channel: ChannelRealization,
    config: SystemConfig,
    variant: AlgorithmVariant,
    init: HybridState,
    controls: Optional[SolverControls] = None,
) -> tuple[HybridState, ConvergenceTrace]:
    """Run the three-step alternating minimization until the rate settles.

    WMMSE variants raise MonotonicityViolation if the objective rises or the
    sampled rate drops beyond slack. MMSE variants roll back an outer
    iteration that lowers the rate and stop there.
    """
    controls = controls or config.controls
    slack = controls.monotonic_slack
    state = init.copy()
    if not variant.weighted:
        n_s = config.n_streams
        state = state.replace(weights=np.broadcast_to(np.eye(n_s, dtype=complex), state.weights.shape).copy())

    labels = step_sequence(controls.step_order, variant.weighted)
    sample_label = StepLabel.S3_WEIGHTS if variant.weighted else StepLabel.S2_COMBINER

    objective = wmmse_objective(channel, state, config)
    trace = ConvergenceTrace(variant=str(variant), initial_objective=objective)
    previous_rate: Optional[float] = None

    for outer in range(controls.outer_cap):
        checkpoint = state
        pending: list[TraceStep] = []
        sampled_rate = 0.0
        regressed = False
        step_objective = objective
        for label in labels:
            state = _STEPS[label](channel, state, config, variant, controls)
            if controls.check_invariants:
                check_state(state, config)
            new_objective = wmmse_objective(channel, state, config)
            evaluation = reported_rate(channel, state, config)
            trace.degenerate = trace.degenerate or evaluation.degenerate
            if new_objective > step_objective + slack:
                if variant.weighted:
                    raise MonotonicityViolation(
                        f"{variant}: objective rose from {step_objective:.12g} to {new_objective:.12g} at {label.value}",
                        code="OBJECTIVE_INCREASED",
                        details={"outer": outer, "label": label.value, "state": checkpoint, "trace": trace},
                    )
                regressed = True
                break
            step_objective = new_objective
            pending.append(TraceStep(label=label, outer_index=outer, objective=new_objective, rate=evaluation.bits))
            if label is sample_label:
                sampled_rate = evaluation.bits

        if not regressed and previous_rate is not None and sampled_rate < previous_rate - slack:
            if variant.weighted:
                raise MonotonicityViolation(
                    f"{variant}: rate fell from {previous_rate:.12g} to {sampled_rate:.12g}",
                    code="RATE_DECREASED",
                    details={"outer": outer, "state": checkpoint, "trace": trace},
                )
            regressed = True

        if regressed:
            # Unweighted runs stop at the last non-regressing iterate.
            logger.debug("%s: outer %d regressed, keeping the previous iterate", variant, outer)
            state = checkpoint
            trace.rolled_back = True
            trace.exit_reason = ExitReason.CONVERGED
            break

        objective = step_objective
        trace.steps.extend(pending)
        trace.outer_rates.append(sampled_rate)
        logger.debug("%s outer %d: J=%.10g R=%.10g", variant, outer, objective, sampled_rate)

        if previous_rate is not None and abs(sampled_rate - previous_rate) <= controls.outer_rel_tol * abs(previous_rate):
            trace.exit_reason = ExitReason.CONVERGED
            break
        previous_rate = sampled_rate
    else:
        trace.exit_reason = ExitReason.MAX_ITERATIONS

    if variant.kind is VariantKind.WMMSE_MO_U:
        state = _quantize_at_exit(channel, state, config, variant.bits)
        trace.quantized_rate = reported_rate(channel, state, config).bits

    return state, trace


def run_variant(
    channel: ChannelRealization,
    config: SystemConfig,
    variant: AlgorithmVariant,
    strategy: InitStrategy,
    seed: int,
    controls: Optional[SolverControls] = None,
) -> RunOutcome:
    """Initialize, optimize and evaluate one variant on one channel."""
    init_bits = variant.search_bits
    init = initialize(channel, config, strategy, seed, bits=init_bits, controls=controls)
    state, trace = alternating_optimize(channel, config, variant, init, controls)
    evaluation = reported_rate(channel, state, config)
    return RunOutcome(state, trace, evaluation.bits, trace.degenerate or evaluation.degenerate)


def water_filling(gains: np.ndarray, total_power: float, noise_var: float) -> tuple[np.ndarray, float]:
    """Optimum powers over parallel channels with power ``gains``, and the water level."""
    gains = np.asarray(gains, dtype=float)
    powers = np.zeros(gains.size)
    order = np.argsort(gains)[::-1]
    active = int(np.sum(gains > 0))
    if active == 0 or total_power <= 0:
        return powers, 0.0

    sorted_gains = gains[order]
    while active > 0:
        floors = noise_var / sorted_gains[:active]
        level = (total_power + np.sum(floors)) / active
        if level > floors[-1]:
            break
        active -= 1
    powers[order[:active]] = level - floors
    return powers, float(level)


def fd_baseline(channel: ChannelRealization, config: SystemConfig) -> float:
    """Fully-digital N_s-stream SVD precoding with water-filling over the eigenmodes."""
    sigma2 = config.noise_var
    total = 0.0
    for H in channel.matrices:
        singular = np.linalg.svd(H, compute_uv=False)[: config.n_streams]
        gains = singular**2
        powers, _ = water_filling(gains, 1.0, sigma2)
        total += float(np.sum(np.log1p(powers * gains / sigma2))) / LN2
    return total / channel.n_subcarriers

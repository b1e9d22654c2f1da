"""Tests for the analog subproblems and their solvers."""

from __future__ import annotations

from dataclasses import replace

import numpy as np
import pytest

from hbfopt.analog import (
    AnalogSubproblem,
    MoExit,
    ScalarRatioFunction,
    SubproblemSide,
    _mo_exit,
    bound_matrix,
    bound_solve,
    build_subproblem,
    ei_coefficients,
    ei_pass,
    ei_pass_bound,
    ei_pass_quantized,
    ei_solve,
    euclidean_gradient_matrix,
    golden_section,
    mo_solve,
    objective,
    objective_matrix,
    periodic_minimize,
    riemannian_gradient,
)
from hbfopt.beamformers import AnalogBeamformer, Side, phase_grid
from hbfopt.channel import generate_channel
from hbfopt.errors import SubproblemConsistencyError
from hbfopt.selftest import finite_difference_gradient

from tests.conftest import random_state

SIDES = (SubproblemSide.PRECODER, SubproblemSide.COMBINER)


def _current(state, side):
    return state.f_rf if side is SubproblemSide.PRECODER else state.w_rf


def _single(value: float, theta1: float, c: float = 1.0) -> ScalarRatioFunction:
    one = np.array([1.0])
    return ScalarRatioFunction(
        a=0.0 * one, b=value * one, c=c * one, d=0.0 * one, theta1=theta1 * one, theta2=0.0 * one
    )


class TestObjective:
    @pytest.mark.parametrize("side", SIDES)
    def test_positive_and_bounded(self, channel, config, state, side):
        sub = build_subproblem(side, channel, state, config)
        value = objective(sub, _current(state, side))
        # C = Λ⁻¹ plus a PSD term, so the inverse trace is at most tr(Λ).
        ceiling = float(np.mean(np.real(np.trace(state.weights, axis1=-2, axis2=-1))))
        assert 0.0 < value <= ceiling + 1e-9

    def test_matrix_form_matches(self, channel, config, state):
        sub = build_subproblem(SubproblemSide.PRECODER, channel, state, config)
        assert objective_matrix(sub, state.f_rf.expand()) == objective(sub, state.f_rf)

    def test_combiner_dimensions(self, channel, config, state):
        sub = build_subproblem(SubproblemSide.COMBINER, channel, state, config)
        assert sub.dim == config.n_rx and sub.n_rf == config.n_rx_rf
        assert sub.block == config.rx_block


class TestGradient:
    @pytest.mark.parametrize("side", SIDES)
    @pytest.mark.parametrize("seed", range(3))
    def test_matches_finite_differences(self, config, side, seed):
        channel = generate_channel(config, seed)
        state = random_state(channel, config, seed)
        sub = build_subproblem(side, channel, state, config)
        X = _current(state, side).expand()
        analytic = euclidean_gradient_matrix(sub, X)
        numeric = finite_difference_gradient(lambda Y: objective_matrix(sub, Y), X, sub.mask)
        assert np.linalg.norm(analytic - numeric) / np.linalg.norm(numeric) < 1e-5
        assert np.all(analytic[~sub.mask] == 0)

    @pytest.mark.parametrize("side", SIDES)
    def test_riemannian_gradient_is_tangent(self, channel, config, state, side):
        x = _current(state, side)
        sub = build_subproblem(side, channel, state, config)
        grad = riemannian_gradient(sub, x)
        assert grad.shape == x.phases.shape
        np.testing.assert_allclose(np.real(np.conj(x.support_values()) * grad), 0.0, atol=1e-12)


class TestScalarFunction:
    @pytest.mark.parametrize("side", SIDES)
    def test_rank_one_expansion_matches_direct(self, channel, config, state, side):
        x = _current(state, side)
        sub = build_subproblem(side, channel, state, config)
        grid = 2 * np.pi * np.arange(8) / 8
        for q in range(x.n_rf):
            p = q * x.block + 1
            scalar = ei_coefficients(sub, x, q, p)
            for theta in grid:
                direct = objective(sub, x.with_phase(q, p, float(theta)))
                assert scalar.objective_at(theta) == pytest.approx(direct, abs=1e-8)

    def test_element_outside_block(self, channel, config, state):
        sub = build_subproblem(SubproblemSide.PRECODER, channel, state, config)
        with pytest.raises(IndexError):
            ei_coefficients(sub, state.f_rf, 0, config.tx_block)

    def test_non_hermitian_forms_rejected(self, rng):
        shape = (2, 2, 8)
        left = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        right = rng.standard_normal((2, 8, 2)) + 1j * rng.standard_normal((2, 8, 2))
        sub = AnalogSubproblem(
            side=SubproblemSide.PRECODER,
            c_mat=np.broadcast_to(np.eye(2, dtype=complex), (2, 2, 2)).copy(),
            left=left,
            right=right,
            scale=np.ones(2),
            n_rf=2,
        )
        x = AnalogBeamformer.random(Side.TX, 8, 2, rng)
        with pytest.raises(SubproblemConsistencyError):
            ei_coefficients(sub, x, 0, 0)


class TestPeriodicMinimize:
    def test_cosine(self):
        # value(θ) = −cos(θ + π) = cos θ
        assert periodic_minimize(_single(1.0, np.pi)) == pytest.approx(np.pi, abs=1e-3)

    def test_shifted_cosine(self):
        # value(θ) = −cos(θ + π − 1)/2 = cos(θ − 1)/2
        assert periodic_minimize(_single(1.0, np.pi - 1.0, c=2.0)) == pytest.approx(1.0 + np.pi, abs=1e-3)

    def test_never_worse_than_grid(self, rng):
        f = ScalarRatioFunction(
            a=rng.uniform(0, 1, 4),
            b=rng.uniform(0, 1, 4),
            c=rng.uniform(3, 4, 4),
            d=rng.uniform(0, 2, 4),
            theta1=rng.uniform(0, 2 * np.pi, 4),
            theta2=rng.uniform(0, 2 * np.pi, 4),
        )
        theta = periodic_minimize(f)
        grid = 2 * np.pi * np.arange(16) / 16
        assert f.value(theta) <= np.min(f.value(grid)) + 1e-15
        assert 0.0 <= theta < 2 * np.pi

    def test_rejects_non_positive_tolerance(self):
        with pytest.raises(ValueError):
            periodic_minimize(_single(1.0, 0.0), tol=0.0)

    def test_golden_section_parabola(self):
        assert golden_section(lambda t: (t - 1.3) ** 2, 0.0, 3.0, 1e-6) == pytest.approx(1.3, abs=1e-5)


class TestElementIteration:
    @pytest.mark.parametrize("side", SIDES)
    def test_pass_does_not_increase_objective(self, channel, config, state, side):
        x = _current(state, side)
        sub = build_subproblem(side, channel, state, config)
        assert objective(sub, ei_pass(sub, x)) <= objective(sub, x) + 1e-12

    def test_solve_history_non_increasing(self, channel, config, state):
        sub = build_subproblem(SubproblemSide.PRECODER, channel, state, config)
        outcome = ei_solve(sub, state.f_rf, sweep_cap=4)
        assert 1 <= outcome.sweeps <= 4
        assert np.all(np.diff(outcome.objectives) <= 1e-12)

    def test_element_selection(self, channel, config, state):
        sub = build_subproblem(SubproblemSide.PRECODER, channel, state, config)
        updated = ei_pass(sub, state.f_rf, elements=[(1, config.tx_block + 2)])
        changed = np.argwhere(updated.phases != state.f_rf.phases)
        assert all(tuple(idx) == (1, 2) for idx in changed)

    @pytest.mark.parametrize("bits", [1, 2])
    @pytest.mark.parametrize("side", SIDES)
    def test_quantized_matches_exhaustive_search(self, channel, config, state, bits, side):
        x = _current(state, side).quantized(bits)
        sub = build_subproblem(side, channel, state, config)
        grid = phase_grid(bits)
        for q in range(x.n_rf):
            p = q * x.block + 3
            chosen = ei_pass_quantized(sub, x, bits, elements=[(q, p)])
            values = [objective(sub, x.with_phase(q, p, float(theta))) for theta in grid]
            assert chosen.phases[q, 3] == grid[int(np.argmin(values))]

    def test_quantized_phases_stay_on_grid(self, channel, config, state):
        sub = build_subproblem(SubproblemSide.COMBINER, channel, state, config)
        outcome = ei_solve(sub, state.w_rf.quantized(2), sweep_cap=3, bits=2)
        assert np.all(np.isin(outcome.beamformer.phases, phase_grid(2)))
        assert np.all(np.diff(outcome.objectives) <= 1e-12)

    def test_quantized_pass_snaps_off_grid_start(self, channel, config, state):
        sub = build_subproblem(SubproblemSide.PRECODER, channel, state, config)
        snapped = ei_pass_quantized(sub, state.f_rf, 2)
        assert np.all(np.isin(snapped.phases, phase_grid(2)))

    def test_quantized_rejects_zero_bits(self, channel, config, state):
        sub = build_subproblem(SubproblemSide.PRECODER, channel, state, config)
        with pytest.raises(ValueError):
            ei_pass_quantized(sub, state.f_rf, 0)


class TestManifoldOptimization:
    @pytest.mark.parametrize("side", SIDES)
    def test_history_non_increasing(self, channel, config, state, side):
        x = _current(state, side)
        sub = build_subproblem(side, channel, state, config)
        outcome = mo_solve(sub, x, max_iter=20)
        assert outcome.iterations <= 20
        assert np.all(np.diff(outcome.objectives) <= 1e-12)
        assert outcome.objectives[-1] == pytest.approx(objective(sub, outcome.beamformer))

    def test_zero_gradient_exits_immediately(self, channel, config, state):
        sub = build_subproblem(SubproblemSide.PRECODER, channel, state, config)
        flat = AnalogSubproblem(
            side=sub.side,
            c_mat=sub.c_mat,
            left=np.zeros_like(sub.left),
            right=np.zeros_like(sub.right),
            scale=sub.scale,
            n_rf=sub.n_rf,
        )
        outcome = mo_solve(flat, state.f_rf)
        assert outcome.exit_reason is MoExit.GRADIENT_TOLERANCE
        assert outcome.iterations == 0

    def test_iteration_cap_exit(self, channel, config, state):
        sub = build_subproblem(SubproblemSide.PRECODER, channel, state, config)
        outcome = mo_solve(sub, state.f_rf, max_iter=2, grad_tol=1e-14)
        assert outcome.exit_reason is MoExit.ITERATION_CAP
        assert outcome.iterations == 2
        assert len(outcome.objectives) == 3

    @pytest.mark.parametrize(
        "criterion, reason",
        [
            ("Terminated - min grad norm reached after 7 iterations.", MoExit.GRADIENT_TOLERANCE),
            ("Terminated - max iterations reached after 50 iterations.", MoExit.ITERATION_CAP),
            ("Terminated - min step_size reached after 3 iterations.", MoExit.STALLED),
        ],
    )
    def test_stopping_criterion_mapping(self, criterion, reason):
        assert _mo_exit(criterion) is reason

    def test_exit_state_consistent(self, channel, config, state):
        sub = build_subproblem(SubproblemSide.COMBINER, channel, state, config)
        outcome = mo_solve(sub, state.w_rf, max_iter=30, grad_tol=1e-4)
        norm = np.linalg.norm(riemannian_gradient(sub, outcome.beamformer))
        assert norm < 1e-4 or outcome.exit_reason is not MoExit.GRADIENT_TOLERANCE
        assert outcome.exit_reason is not MoExit.ITERATION_CAP or outcome.iterations == 30

    def test_agrees_with_element_iteration(self, tiny_config):
        for seed in range(3):
            channel = generate_channel(tiny_config, seed)
            state = random_state(channel, tiny_config, seed)
            sub = build_subproblem(SubproblemSide.PRECODER, channel, state, tiny_config)
            ei = ei_solve(sub, state.f_rf, sweep_cap=50, rel_tol=1e-10, tol=1e-6)
            mo = mo_solve(sub, state.f_rf, max_iter=500, grad_tol=1e-9)
            ei_value = objective(sub, ei.beamformer)
            mo_value = objective(sub, mo.beamformer)
            assert abs(ei_value - mo_value) <= 1e-3 * abs(ei_value)


class TestBoundSweep:
    def test_requires_unit_weights(self, channel, config, state):
        sub = build_subproblem(SubproblemSide.COMBINER, channel, state, config)
        with pytest.raises(SubproblemConsistencyError):
            bound_matrix(sub)

    def test_quadratic_form_increases(self, channel, config, state):
        unit = state.replace(weights=np.broadcast_to(np.eye(2, dtype=complex), state.weights.shape).copy())
        sub = build_subproblem(SubproblemSide.PRECODER, channel, unit, config)
        A = bound_matrix(sub)

        def quad(x):
            X = x.expand()
            return float(np.real(np.trace(X.conj().T @ A @ X)))

        x = unit.f_rf
        updated, sweeps = bound_solve(A, x, sweep_cap=5)
        assert 1 <= sweeps <= 5
        assert quad(updated) >= quad(x) - 1e-10
        assert quad(ei_pass_bound(A, x)) >= quad(x) - 1e-10

    def test_quantized_sweep_on_grid(self, channel, config, state):
        unit = state.replace(weights=np.broadcast_to(np.eye(2, dtype=complex), state.weights.shape).copy())
        sub = build_subproblem(SubproblemSide.COMBINER, channel, unit, config)
        updated, _ = bound_solve(bound_matrix(sub), unit.w_rf.quantized(3), bits=3)
        assert np.all(np.isin(updated.phases, phase_grid(3)))


class TestSideSymmetry:
    def test_combiner_data_under_precoder_label(self, channel, config, state):
        combiner = build_subproblem(SubproblemSide.COMBINER, channel, state, config)
        relabeled = replace(combiner, side=SubproblemSide.PRECODER)
        rx = state.w_rf
        tx = AnalogBeamformer(Side.TX, rx.phases.copy())

        assert objective(relabeled, tx) == objective(combiner, rx)
        np.testing.assert_array_equal(ei_pass(relabeled, tx).phases, ei_pass(combiner, rx).phases)
        mo_rx = mo_solve(combiner, rx, max_iter=10)
        mo_tx = mo_solve(relabeled, tx, max_iter=10)
        assert mo_tx.objectives == pytest.approx(mo_rx.objectives, rel=1e-12)
        assert mo_tx.beamformer.side is Side.TX

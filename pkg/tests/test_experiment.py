"""Tests for seeded sweeps and the multiplication-count estimator."""

from __future__ import annotations

import pytest

from hbfopt import experiment
from hbfopt.errors import ConfigurationError, DegenerateInputError, MonotonicityViolation
from hbfopt.experiment import (
    FLAG_MONOTONICITY_ABORT,
    FLAG_ROLLED_BACK,
    FLAG_SOLVER_ERROR,
    REFERENCE_ITERATION_COUNTS,
    complexity_estimate,
    expected_row_count,
    run_experiment,
    trace_key,
)
from hbfopt.reporting import render_results_csv
from hbfopt.variants import AlgorithmVariant, VariantKind


class TestComplexity:
    @pytest.mark.parametrize(
        "kind, expected",
        [
            (VariantKind.WMMSE_EI, 9.0e8),
            (VariantKind.WMMSE_MO, 3.3e8),
            (VariantKind.MMSE_EI, 1.3e7),
        ],
    )
    def test_reference_figures(self, kind, expected):
        counts = REFERENCE_ITERATION_COUNTS[kind]
        value = complexity_estimate(32, 4, 64, AlgorithmVariant(kind), counts.n_in, counts.n_out, counts.n_g)
        assert abs(value - expected) / expected < 0.05

    def test_ordering(self):
        ei, mo, mmse = (
            complexity_estimate(32, 4, 64, AlgorithmVariant(kind), c.n_in, c.n_out, c.n_g)
            for kind, c in REFERENCE_ITERATION_COUNTS.items()
        )
        assert mmse < mo < ei

    def test_quantized_search_defaults_to_phase_set_size(self):
        variant = AlgorithmVariant(VariantKind.WMMSE_EI_Q, 3)
        implicit = complexity_estimate(32, 4, 64, variant, 3, 10)
        explicit = complexity_estimate(32, 4, 64, AlgorithmVariant(VariantKind.WMMSE_EI), 3, 10, 8)
        assert implicit == explicit

    def test_missing_line_search_count(self):
        with pytest.raises(ConfigurationError) as excinfo:
            complexity_estimate(32, 4, 64, AlgorithmVariant(VariantKind.WMMSE_EI), 3, 10)
        assert excinfo.value.code == "BAD_COMPLEXITY_INPUT"

    @pytest.mark.parametrize("args", [(0, 4, 64, 3, 10), (32, 4, 64, -1, 10), (32, 0, 64, 3, 10)])
    def test_non_positive_inputs(self, args):
        n_ant, n_rf, k, n_in, n_out = args
        with pytest.raises(ConfigurationError):
            complexity_estimate(n_ant, n_rf, k, AlgorithmVariant(VariantKind.MMSE_EI), n_in, n_out)


class TestRunExperiment:
    def test_rows_cover_the_grid(self, tiny_spec):
        result = run_experiment(tiny_spec)
        assert len(result.rows) == expected_row_count(tiny_spec) == 12
        keys = [row.sort_key() for row in result.rows]
        assert keys == sorted(keys)
        assert {row.variant for row in result.rows} == {"WMMSE-EI", "MMSE-EI"}
        for row in result.rows:
            assert 0.0 <= row.rate <= row.fd_rate + 1e-9
            assert row.wall_ms == 0.0
            assert FLAG_MONOTONICITY_ABORT not in row.flags
        assert not result.aborted

    def test_reproducible_across_concurrency(self, tiny_spec):
        serial = tiny_spec.with_overrides({"concurrency": 1})
        assert render_results_csv(run_experiment(serial).rows) == render_results_csv(run_experiment(tiny_spec).rows)

    def test_variants_share_channels(self, tiny_spec):
        result = run_experiment(tiny_spec)
        fd_rates = {}
        for row in result.rows:
            fd_rates.setdefault((row.seed, row.snr_db), set()).add(row.fd_rate)
        assert all(len(values) == 1 for values in fd_rates.values())

    def test_progress_callback(self, tiny_spec):
        seen = []
        run_experiment(tiny_spec, progress_callback=seen.append)
        assert sorted(seen) == [0, 1, 2]

    def test_quant_grid_replicates_unquantized_variants(self, tiny_spec):
        spec = tiny_spec.with_overrides(
            {"variants": ["wmmse-ei", "wmmse-ei-q"], "quant_grid": [1, 2], "snr_grid": [0.0], "n_realizations": 1}
        )
        result = run_experiment(spec)
        assert len(result.rows) == expected_row_count(spec) == 4
        plain = [row for row in result.rows if row.variant == "WMMSE-EI"]
        quantized = [row for row in result.rows if row.variant == "WMMSE-EI-Q"]
        assert len(plain) == 2 and plain[0].rate == plain[1].rate
        assert all(row.quant_bits is None for row in plain)
        assert sorted(row.quant_bits for row in quantized) == [1, 2]

    def test_traces_written_on_request(self, tiny_spec):
        spec = tiny_spec.with_overrides({"write_traces": True, "n_realizations": 1})
        result = run_experiment(spec)
        seed = spec.system.seed
        expected = {
            trace_key(AlgorithmVariant(kind), snr, seed)
            for kind in (VariantKind.WMMSE_EI, VariantKind.MMSE_EI)
            for snr in spec.snr_grid
        }
        assert set(result.traces) == expected

    def test_monotonicity_abort_flags_row(self, tiny_spec, monkeypatch):
        def failing(*args, **kwargs):
            raise MonotonicityViolation("rate fell", code="RATE_DECREASED")

        monkeypatch.setattr(experiment, "run_variant", failing)
        result = run_experiment(tiny_spec.with_overrides({"n_realizations": 1}))
        assert result.aborted
        assert all(row.flags == [FLAG_MONOTONICITY_ABORT] for row in result.rows)
        assert all(row.rate == 0.0 and row.outer_iters == 0 for row in result.rows)

    def test_solver_error_flags_row(self, tiny_spec, monkeypatch):
        def failing(*args, **kwargs):
            raise DegenerateInputError("scale vanished", code="NON_POSITIVE_SCALE")

        monkeypatch.setattr(experiment, "run_variant", failing)
        result = run_experiment(tiny_spec.with_overrides({"n_realizations": 1}))
        assert not result.aborted
        assert all(row.flags == [FLAG_SOLVER_ERROR] for row in result.rows)

    def test_rolled_back_flag(self, tiny_spec, monkeypatch):
        real_run = experiment.run_variant

        def rolled_back(*args, **kwargs):
            outcome = real_run(*args, **kwargs)
            outcome.trace.rolled_back = True
            return outcome

        monkeypatch.setattr(experiment, "run_variant", rolled_back)
        result = run_experiment(tiny_spec.with_overrides({"n_realizations": 1}))
        assert all(FLAG_ROLLED_BACK in row.flags for row in result.rows)

    def test_mean_rates(self, tiny_spec):
        result = run_experiment(tiny_spec)
        means = result.mean_rates()
        assert set(means) == {(v, "inf", snr) for v in ("WMMSE-EI", "MMSE-EI") for snr in tiny_spec.snr_grid}
        fd = result.mean_fd_rates()
        assert all(means[(v, q, snr)] <= fd[snr] + 1e-9 for v, q, snr in means)

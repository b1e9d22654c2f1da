"""Tests for algorithm variant parsing."""

from __future__ import annotations

import pytest

from hbfopt.errors import ConfigurationError
from hbfopt.variants import AlgorithmVariant, VariantKind, mmse_counterpart


class TestAlgorithmVariant:
    @pytest.mark.parametrize(
        "name, kind, bits",
        [
            ("wmmse-ei", VariantKind.WMMSE_EI, None),
            ("WMMSE_MO", VariantKind.WMMSE_MO, None),
            ("wmmse-ei-q:2", VariantKind.WMMSE_EI_Q, 2),
            ("MMSE-EI-Q:1", VariantKind.MMSE_EI_Q, 1),
        ],
    )
    def test_parse(self, name, kind, bits):
        variant = AlgorithmVariant.parse(name)
        assert variant.kind is kind and variant.bits == bits

    def test_quantized_needs_bits(self):
        with pytest.raises(ConfigurationError) as excinfo:
            AlgorithmVariant(VariantKind.WMMSE_MO_U)
        assert excinfo.value.code == "MISSING_BITS"

    def test_unquantized_rejects_bits(self):
        with pytest.raises(ConfigurationError):
            AlgorithmVariant(VariantKind.WMMSE_EI, 3)

    def test_unknown_name(self):
        with pytest.raises(ConfigurationError) as excinfo:
            AlgorithmVariant.parse("zero-forcing")
        assert excinfo.value.code == "BAD_VARIANT"

    def test_properties(self):
        mo_u = AlgorithmVariant(VariantKind.WMMSE_MO_U, 3)
        assert mo_u.weighted and mo_u.uses_manifold and mo_u.quantized
        assert mo_u.search_bits is None
        assert str(mo_u) == "WMMSE-MO-U:3"
        mmse_q = AlgorithmVariant(VariantKind.MMSE_EI_Q, 2)
        assert not mmse_q.weighted and mmse_q.search_bits == 2
        assert AlgorithmVariant(VariantKind.MMSE_EI).label == "MMSE-EI"

    def test_mmse_counterpart_keeps_alphabet(self):
        assert mmse_counterpart(AlgorithmVariant(VariantKind.WMMSE_EI_Q, 2)) == AlgorithmVariant(VariantKind.MMSE_EI_Q, 2)
        assert mmse_counterpart(AlgorithmVariant(VariantKind.WMMSE_MO_U, 2)) == AlgorithmVariant(VariantKind.MMSE_EI)
        assert mmse_counterpart(AlgorithmVariant(VariantKind.WMMSE_MO)) == AlgorithmVariant(VariantKind.MMSE_EI)

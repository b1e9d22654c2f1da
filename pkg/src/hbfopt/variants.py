"""Algorithm variants, initialization strategies and step ordering."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

from .errors import ConfigurationError


class VariantKind(str, Enum):
    WMMSE_EI = "wmmse-ei"
    WMMSE_MO = "wmmse-mo"
    MMSE_EI = "mmse-ei"
    WMMSE_EI_Q = "wmmse-ei-q"
    MMSE_EI_Q = "mmse-ei-q"
    WMMSE_MO_U = "wmmse-mo-u"


QUANTIZED_KINDS = {VariantKind.WMMSE_EI_Q, VariantKind.MMSE_EI_Q, VariantKind.WMMSE_MO_U}


class InitStrategy(str, Enum):
    RANDOM = "random"
    MMSE = "mmse"


class StepOrder(str, Enum):
    PRECODER_FIRST = "precoder_first"
    COMBINER_FIRST = "combiner_first"


@dataclass(frozen=True)
class AlgorithmVariant:
    """One alternating-optimization variant, optionally carrying a bit count."""

    kind: VariantKind
    bits: Optional[int] = None

    def __post_init__(self) -> None:
        if self.kind in QUANTIZED_KINDS:
            if self.bits is None or self.bits < 1:
                raise ConfigurationError(
                    f"Variant {self.kind.value} requires bits >= 1",
                    code="MISSING_BITS",
                )
        elif self.bits is not None:
            raise ConfigurationError(
                f"Variant {self.kind.value} does not take a bit count",
                code="UNEXPECTED_BITS",
            )

    @classmethod
    def parse(cls, name: str, bits: Optional[int] = None) -> AlgorithmVariant:
        """Parse ``wmmse-ei``, ``WMMSE-EI-Q`` or ``wmmse-ei-q:2`` style names."""
        text = name.strip().lower().replace("_", "-")
        if ":" in text:
            text, _, raw_bits = text.partition(":")
            try:
                bits = int(raw_bits)
            except ValueError as exc:
                raise ConfigurationError(f"Invalid bit count in variant '{name}'", code="BAD_VARIANT") from exc
        try:
            kind = VariantKind(text)
        except ValueError as exc:
            known = ", ".join(k.value for k in VariantKind)
            raise ConfigurationError(
                f"Unknown variant '{name}' (expected one of: {known})",
                code="BAD_VARIANT",
            ) from exc
        return cls(kind=kind, bits=bits if kind in QUANTIZED_KINDS else None)

    @property
    def weighted(self) -> bool:
        return self.kind not in {VariantKind.MMSE_EI, VariantKind.MMSE_EI_Q}

    @property
    def quantized(self) -> bool:
        return self.kind in QUANTIZED_KINDS

    @property
    def uses_manifold(self) -> bool:
        return self.kind in {VariantKind.WMMSE_MO, VariantKind.WMMSE_MO_U}

    @property
    def search_bits(self) -> Optional[int]:
        """Bit count applied during the search (WMMSE-MO-U only quantizes at exit)."""
        if self.kind in {VariantKind.WMMSE_EI_Q, VariantKind.MMSE_EI_Q}:
            return self.bits
        return None

    @property
    def label(self) -> str:
        return self.kind.value.upper()

    def __str__(self) -> str:
        if self.bits is None:
            return self.label
        return f"{self.label}:{self.bits}"


def mmse_counterpart(variant: AlgorithmVariant) -> AlgorithmVariant:
    """MMSE variant used to warm-start ``variant`` (keeps the phase alphabet)."""
    if variant.search_bits is not None:
        return AlgorithmVariant(VariantKind.MMSE_EI_Q, variant.search_bits)
    return AlgorithmVariant(VariantKind.MMSE_EI)

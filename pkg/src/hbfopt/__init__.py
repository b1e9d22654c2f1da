"""hbfopt: hybrid analog/digital beamforming optimization for partially-connected mmWave MIMO-OFDM."""

__version__ = "0.1.0"
__author__ = "hbfopt developers"

# Import light-weight types only - avoid circular imports
from .errors import HybridBeamformingError
from .models import ConvergenceTrace, ResultRow, TraceStep
from .variants import AlgorithmVariant, InitStrategy, StepOrder, VariantKind

__all__ = [
    "AlgorithmVariant",
    "ConvergenceTrace",
    "HybridBeamformingError",
    "InitStrategy",
    "ResultRow",
    "StepOrder",
    "TraceStep",
    "VariantKind",
]

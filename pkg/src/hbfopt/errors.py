"""Custom exceptions for hbfopt."""

from typing import Optional


class HybridBeamformingError(Exception):
    """Base exception for hbfopt."""

    def __init__(self, message: str, code: Optional[str] = None, details: Optional[dict] = None):
        super().__init__(message)
        self.code = code
        self.details = details


class ConfigurationError(HybridBeamformingError):
    """Raised when a system configuration or experiment spec is invalid."""
    pass


class ChannelError(HybridBeamformingError):
    """Raised when a channel cannot be generated or decoded."""
    pass


class DegenerateInputError(HybridBeamformingError):
    """Raised when a closed-form update receives a non-positive scale or weight."""
    pass


class IllConditionedError(HybridBeamformingError):
    """Raised when a matrix to be inverted exceeds the condition-number limit."""
    pass


class SubproblemConsistencyError(HybridBeamformingError):
    """Raised when the element-iteration quadratic forms are not Hermitian."""
    pass


class InvariantViolation(HybridBeamformingError):
    """Raised when a hybrid beamformer state breaks a structural invariant."""
    pass


class MonotonicityViolation(HybridBeamformingError):
    """Raised when the objective or rate trace moves the wrong way beyond slack."""
    pass


class ReportingError(HybridBeamformingError):
    """Raised when result files cannot be written or read."""
    pass

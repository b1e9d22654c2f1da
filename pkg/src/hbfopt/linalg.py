"""Batched Hermitian linear algebra used by the closed-form updates.

All helpers accept a single matrix or a stack of matrices along the leading
axes and operate on the last two axes.
"""

from __future__ import annotations

import numpy as np

from .errors import DegenerateInputError, IllConditionedError

CONDITION_LIMIT = 1e12


def hermitian(matrix: np.ndarray) -> np.ndarray:
    """Return the Hermitian part (A + A^H) / 2."""
    return 0.5 * (matrix + np.conj(np.swapaxes(matrix, -1, -2)))


def hermitian_residual(matrix: np.ndarray) -> float:
    """Relative distance of ``matrix`` from its Hermitian part."""
    scale = float(np.max(np.abs(matrix))) if matrix.size else 0.0
    if scale == 0.0:
        return 0.0
    diff = matrix - np.conj(np.swapaxes(matrix, -1, -2))
    return float(np.max(np.abs(diff))) / scale


def condition_number(matrix: np.ndarray) -> np.ndarray:
    """Spectral condition number of Hermitian matrices (inf when singular)."""
    eigvals = np.linalg.eigvalsh(hermitian(matrix))
    smallest = eigvals[..., 0]
    largest = eigvals[..., -1]
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = np.where(smallest > 0, largest / np.where(smallest > 0, smallest, 1.0), np.inf)
    return cond


def _cholesky(matrix: np.ndarray, *, what: str) -> np.ndarray:
    try:
        return np.linalg.cholesky(hermitian(matrix))
    except np.linalg.LinAlgError as exc:
        raise DegenerateInputError(
            f"{what} is not Hermitian positive definite",
            code="NOT_POSITIVE_DEFINITE",
        ) from exc


def hpd_solve(matrix: np.ndarray, rhs: np.ndarray, *, what: str = "matrix") -> np.ndarray:
    """Solve ``matrix @ X = rhs`` for Hermitian positive-definite ``matrix``."""
    lower = _cholesky(matrix, what=what)
    partial = np.linalg.solve(lower, rhs)
    return np.linalg.solve(np.conj(np.swapaxes(lower, -1, -2)), partial)


def hpd_inverse(
    matrix: np.ndarray,
    *,
    what: str = "matrix",
    cond_limit: float | None = CONDITION_LIMIT,
) -> np.ndarray:
    """Invert Hermitian positive-definite matrices through their Cholesky factor."""
    if cond_limit is not None:
        cond = np.atleast_1d(condition_number(matrix))
        if np.any(cond > cond_limit):
            raise IllConditionedError(
                f"{what} has condition number {float(np.max(cond)):.3e} above {cond_limit:.0e}",
                code="ILL_CONDITIONED",
                details={"condition_number": float(np.max(cond))},
            )
    lower = _cholesky(matrix, what=what)
    identity = np.broadcast_to(np.eye(matrix.shape[-1], dtype=complex), matrix.shape)
    lower_inv = np.linalg.solve(lower, identity)
    return hermitian(np.conj(np.swapaxes(lower_inv, -1, -2)) @ lower_inv)


def logdet_hpd(matrix: np.ndarray, *, what: str = "matrix") -> np.ndarray:
    """Natural log-determinant of Hermitian positive-definite matrices."""
    lower = _cholesky(matrix, what=what)
    diag = np.real(np.diagonal(lower, axis1=-2, axis2=-1))
    return 2.0 * np.sum(np.log(diag), axis=-1)


def trace_real(matrix: np.ndarray) -> np.ndarray:
    """Real part of the trace over the last two axes."""
    return np.real(np.trace(matrix, axis1=-2, axis2=-1))


def conj_t(matrix: np.ndarray) -> np.ndarray:
    """Conjugate transpose over the last two axes."""
    return np.conj(np.swapaxes(matrix, -1, -2))

"""Unit-modulus block-diagonal analog subproblems and their solvers.

One ``AnalogSubproblem`` describes either side:

    f(X) = (1/K) Σ_k tr((C_k + s_k⁻¹ L_k X X^H R_k)⁻¹)

Element iteration (continuous or quantized), Riemannian conjugate gradient
and the closed-form MMSE bound sweep all work on that form.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np
import pymanopt
from pymanopt.manifolds import ComplexCircle
from pymanopt.optimizers import ConjugateGradient
from pymanopt.optimizers.line_search import BackTrackingLineSearcher

from .beamformers import TWO_PI, AnalogBeamformer, HybridState, Side, block_mask, phase_grid, quantize_phases, wrap_phase
from .channel import ChannelRealization
from .config import SystemConfig
from .digital import SILENT_TOL, bound_matrix as _bound_matrix, combiner_aux, precoder_aux
from .errors import DegenerateInputError, SubproblemConsistencyError
from .linalg import conj_t, hermitian, hermitian_residual, hpd_inverse

logger = logging.getLogger(__name__)

HERMITIAN_TOL = 1e-8
DEGENERATE_VARIATION = 1e-14
COARSE_GRID_POINTS = 16
INV_PHI = (math.sqrt(5) - 1) / 2
INV_PHI_SQUARE = (3 - math.sqrt(5)) / 2


class SubproblemSide(str, Enum):
    PRECODER = "precoder"
    COMBINER = "combiner"


@dataclass(frozen=True)
class AnalogSubproblem:
    side: SubproblemSide
    c_mat: np.ndarray  # (K, N_s, N_s)
    left: np.ndarray  # (K, N_s, D)
    right: np.ndarray  # (K, D, N_s)
    scale: np.ndarray  # (K,)
    n_rf: int

    @property
    def dim(self) -> int:
        return self.left.shape[-1]

    @property
    def block(self) -> int:
        return self.dim // self.n_rf

    @property
    def ratio(self) -> float:
        return self.n_rf / self.dim

    @property
    def n_subcarriers(self) -> int:
        return self.c_mat.shape[0]

    @property
    def mask(self) -> np.ndarray:
        return block_mask(self.dim, self.n_rf)

    @property
    def beamformer_side(self) -> Side:
        return Side.TX if self.side is SubproblemSide.PRECODER else Side.RX


def _checked_scale(scale: np.ndarray, left: np.ndarray) -> np.ndarray:
    scale = np.array(scale, dtype=float)
    for k in range(scale.shape[0]):
        if scale[k] > 0:
            continue
        if np.linalg.norm(left[k]) <= SILENT_TOL:
            # Silent subcarrier: the scale multiplies a zero term.
            scale[k] = 1.0
            continue
        raise DegenerateInputError(
            f"subproblem scale {scale[k]:.3e} on subcarrier {k} is not positive",
            code="NON_POSITIVE_SCALE",
            details={"subcarrier": k},
        )
    return scale


def build_subproblem(
    side: SubproblemSide,
    channel: ChannelRealization,
    state: HybridState,
    config: SystemConfig,
) -> AnalogSubproblem:
    """Reduce the current state to the analog precoder or combiner subproblem."""
    c_mat = hpd_inverse(state.weights, what="weight matrix", cond_limit=None)
    if side is SubproblemSide.PRECODER:
        aux = precoder_aux(channel, state, config)
        left = aux.g_tilde
        right = conj_t(aux.g_tilde)
        scale = _checked_scale(aux.beta, left)
        n_rf = config.n_tx_rf
    else:
        aux = combiner_aux(channel, state, config)
        left = c_mat @ conj_t(aux.g)
        right = aux.g
        scale = _checked_scale(aux.alpha, left)
        n_rf = config.n_rx_rf
    return AnalogSubproblem(side=side, c_mat=c_mat, left=left, right=right, scale=scale, n_rf=n_rf)


def objective_matrix(sub: AnalogSubproblem, X: np.ndarray) -> float:
    """Subproblem objective at an arbitrary D × n_rf matrix."""
    M = sub.c_mat + (sub.left @ X) @ (conj_t(X) @ sub.right) / sub.scale[:, None, None]
    traces = np.trace(np.linalg.inv(M), axis1=-2, axis2=-1)
    value = complex(np.mean(traces))
    if abs(value.imag) > 1e-10 * max(1.0, abs(value.real)):
        logger.debug("Analog objective has imaginary residue %.3e", value.imag)
    return value.real


def objective(sub: AnalogSubproblem, x: AnalogBeamformer) -> float:
    return objective_matrix(sub, x.expand())


def euclidean_gradient_matrix(sub: AnalogSubproblem, X: np.ndarray) -> np.ndarray:
    """Real-coordinate gradient ∂f/∂Re X + j ∂f/∂Im X, masked to block support."""
    LX = sub.left @ X
    M = sub.c_mat + LX @ (conj_t(X) @ sub.right) / sub.scale[:, None, None]
    M_inv = np.linalg.inv(M)
    per_k = sub.right @ (M_inv @ M_inv) @ LX / sub.scale[:, None, None]
    gradient = -2.0 * np.mean(per_k, axis=0)
    return np.where(sub.mask, gradient, 0.0)


def euclidean_gradient(sub: AnalogSubproblem, x: AnalogBeamformer) -> np.ndarray:
    return euclidean_gradient_matrix(sub, x.expand())


def _support(matrix: np.ndarray, n_rf: int) -> np.ndarray:
    block = matrix.shape[0] // n_rf
    return np.stack([matrix[q * block:(q + 1) * block, q] for q in range(n_rf)])


def _expand_support(values: np.ndarray) -> np.ndarray:
    n_rf, block = values.shape
    matrix = np.zeros((n_rf * block, n_rf), dtype=complex)
    for q in range(n_rf):
        matrix[q * block:(q + 1) * block, q] = values[q]
    return matrix


def riemannian_gradient(sub: AnalogSubproblem, x: AnalogBeamformer) -> np.ndarray:
    """Tangent projection of the gradient on block support, shape (n_rf, block)."""
    z = x.support_values()
    return ComplexCircle(z.size).projection(z, _support(euclidean_gradient(sub, x), sub.n_rf))


@dataclass(frozen=True)
class ScalarRatioFunction:
    """value(θ) = −(1/K) Σ_k (A_k + B_k cos(θ+θ1_k)) / (C_k + D_k cos(θ+θ2_k))."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray
    theta1: np.ndarray
    theta2: np.ndarray
    offset: float = 0.0

    def value(self, theta):
        t = np.asarray(theta, dtype=float)[..., None]
        num = self.a + self.b * np.cos(t + self.theta1)
        den = self.c + self.d * np.cos(t + self.theta2)
        result = -np.mean(num / den, axis=-1)
        return float(result) if result.ndim == 0 else result

    def objective_at(self, theta):
        """Subproblem objective with the element at phase ``theta``."""
        return self.offset + self.value(theta)

    def total_variation(self, grid_points: int = COARSE_GRID_POINTS) -> float:
        values = self.value(TWO_PI * np.arange(grid_points) / grid_points)
        return float(np.sum(np.abs(np.diff(np.append(values, values[0])))))


class _ChainTerms(NamedTuple):
    a_blk: np.ndarray  # (K, b, b)
    b_blk: np.ndarray  # (K, b, b)
    offset: float


def _chain_terms(sub: AnalogSubproblem, X: np.ndarray, q: int) -> _ChainTerms:
    """Ω, A and B of chain ``q``; they exclude column q so stay fixed while it changes."""
    rows = slice(q * sub.block, (q + 1) * sub.block)
    keep = np.arange(sub.n_rf) != q
    inv_s = (1.0 / sub.scale)[:, None, None]
    LX = sub.left @ X[:, keep]
    XR = conj_t(X[:, keep]) @ sub.right
    omega_inv = np.linalg.inv(sub.c_mat + LX @ XR * inv_s)
    R_blk = sub.right[:, rows, :]
    L_blk = sub.left[:, :, rows]
    a_blk = R_blk @ omega_inv @ omega_inv @ L_blk * inv_s
    b_blk = sub.ratio * np.eye(sub.block) + R_blk @ omega_inv @ L_blk * inv_s
    for name, matrix in (("A", a_blk), ("B", b_blk)):
        residual = hermitian_residual(matrix)
        if residual > HERMITIAN_TOL:
            raise SubproblemConsistencyError(
                f"{name} matrix of chain {q} is not Hermitian (residual {residual:.3e})",
                code="NON_HERMITIAN_FORM",
                details={"chain": q},
            )
    offset = float(np.mean(np.real(np.trace(omega_inv, axis1=-2, axis2=-1))))
    return _ChainTerms(hermitian(a_blk), hermitian(b_blk), offset)


def _ratio_function(terms: _ChainTerms, z: np.ndarray, i: int) -> ScalarRatioFunction:
    z_hat = z.copy()
    z_hat[i] = 0.0
    z_conj = np.conj(z_hat)

    def coefficients(blk: np.ndarray):
        cross = np.einsum("j,kj->k", z_conj, blk[:, :, i])
        base = np.real(np.einsum("j,kjl,l->k", z_conj, blk, z_hat)) + np.real(blk[:, i, i])
        return base, 2.0 * np.abs(cross), np.angle(cross)

    a, b, theta1 = coefficients(terms.a_blk)
    c, d, theta2 = coefficients(terms.b_blk)
    return ScalarRatioFunction(a=a, b=b, c=c, d=d, theta1=theta1, theta2=theta2, offset=terms.offset)


def ei_coefficients(sub: AnalogSubproblem, x: AnalogBeamformer, q: int, p: int) -> ScalarRatioFunction:
    """Scalar function of the element in global row ``p`` of chain ``q``."""
    local = p - q * sub.block
    if not 0 <= local < sub.block:
        raise IndexError(f"row {p} is outside the block of chain {q}")
    terms = _chain_terms(sub, x.expand(), q)
    return _ratio_function(terms, x.support_values()[q], local)


def golden_section(f, a: float, b: float, tol: float) -> float:
    """Golden-section search for a unimodal minimum in [a, b]; returns the final midpoint."""
    a, b = min(a, b), max(a, b)
    h = b - a
    if h <= tol:
        return 0.5 * (a + b)
    n = int(math.ceil(math.log(tol / h) / math.log(INV_PHI)))
    c = a + INV_PHI_SQUARE * h
    d = a + INV_PHI * h
    yc = f(c)
    yd = f(d)
    for _ in range(n - 1):
        if yc < yd:
            b = d
            d = c
            yd = yc
            h = INV_PHI * h
            c = a + INV_PHI_SQUARE * h
            yc = f(c)
        else:
            a = c
            c = d
            yc = yd
            h = INV_PHI * h
            d = a + INV_PHI * h
            yd = f(d)
    if yc < yd:
        return 0.5 * (a + d)
    return 0.5 * (c + b)


def periodic_minimize(
    f: ScalarRatioFunction,
    tol: float = 1e-3,
    grid_points: int = COARSE_GRID_POINTS,
    max_brackets: int = 3,
) -> float:
    """Minimize a 2π-periodic scalar function: coarse grid, then golden section around grid minima.

    The result is never worse than the best coarse grid point.
    """
    if tol <= 0:
        raise ValueError("tol must be > 0")
    step = TWO_PI / grid_points
    grid = step * np.arange(grid_points)
    values = f.value(grid)
    best = int(np.argmin(values))
    candidates = [(float(values[best]), float(grid[best]))]

    local = [
        i for i in range(grid_points)
        if values[i] <= values[i - 1] and values[i] <= values[(i + 1) % grid_points]
    ]
    local.sort(key=lambda i: values[i])
    for i in local[:max_brackets]:
        theta = golden_section(f.value, grid[i] - step, grid[i] + step, tol)
        candidates.append((f.value(theta), theta))

    _, theta = min(candidates)
    return float(wrap_phase(theta))


def _selection(elements: Optional[Iterable[Sequence[int]]]) -> Optional[set]:
    if elements is None:
        return None
    return {(int(q), int(p)) for q, p in elements}


def _element_sweep(
    sub: AnalogSubproblem,
    x: AnalogBeamformer,
    *,
    tol: float,
    bits: Optional[int],
    elements: Optional[Iterable[Sequence[int]]],
) -> AnalogBeamformer:
    selected = _selection(elements)
    phases = x.phases.copy()
    grid = phase_grid(bits) if bits is not None else None
    block = sub.block

    for q in range(sub.n_rf):
        chain_rows = range(q * block, (q + 1) * block)
        if selected is not None and not any((q, p) in selected for p in chain_rows):
            continue
        X = _expand_support(np.exp(1j * phases))
        terms = _chain_terms(sub, X, q)
        z = np.exp(1j * phases[q])
        for i, p in enumerate(chain_rows):
            if selected is not None and (q, p) not in selected:
                continue
            f = _ratio_function(terms, z, i)
            current = phases[q, i]
            if grid is None:
                if f.total_variation() < DEGENERATE_VARIATION:
                    continue
                candidate = periodic_minimize(f, tol)
                if f.value(candidate) > f.value(current):
                    continue
            else:
                values = f.value(grid)
                n = int(np.argmin(values))
                candidate = float(grid[n])
                if np.any(grid == current) and f.value(current) <= values[n]:
                    continue
            phases[q, i] = candidate
            z[i] = np.exp(1j * candidate)

    return AnalogBeamformer(x.side, phases)


def ei_pass(
    sub: AnalogSubproblem,
    x: AnalogBeamformer,
    tol: float = 1e-3,
    elements: Optional[Iterable[Sequence[int]]] = None,
) -> AnalogBeamformer:
    """One element-iteration sweep: chains ascending, elements ascending within each block."""
    return _element_sweep(sub, x, tol=tol, bits=None, elements=elements)


def ei_pass_quantized(
    sub: AnalogSubproblem,
    x: AnalogBeamformer,
    bits: int,
    elements: Optional[Iterable[Sequence[int]]] = None,
) -> AnalogBeamformer:
    """Element-iteration sweep restricted to the 2^B phase set.

    Expects ``x`` on the grid: an off-grid element always moves to the grid
    argmin, which need not lower the objective.
    """
    if bits < 1:
        raise ValueError("bits must be >= 1")
    return _element_sweep(sub, x, tol=1.0, bits=bits, elements=elements)


class EiOutcome(NamedTuple):
    beamformer: AnalogBeamformer
    sweeps: int
    objectives: list


def ei_solve(
    sub: AnalogSubproblem,
    x0: AnalogBeamformer,
    sweep_cap: int = 5,
    rel_tol: float = 1e-4,
    tol: float = 1e-3,
    bits: Optional[int] = None,
) -> EiOutcome:
    """Repeat element-iteration sweeps until the relative objective change drops below ``rel_tol``."""
    x = x0
    value = objective(sub, x)
    history = [value]
    sweeps = 0
    while sweeps < sweep_cap:
        x = ei_pass(sub, x, tol) if bits is None else ei_pass_quantized(sub, x, bits)
        sweeps += 1
        new_value = objective(sub, x)
        history.append(new_value)
        converged = abs(value - new_value) <= rel_tol * abs(value)
        value = new_value
        if converged:
            break
    return EiOutcome(x, sweeps, history)


class MoExit(str, Enum):
    GRADIENT_TOLERANCE = "GradientTolerance"
    ITERATION_CAP = "IterationCap"
    STALLED = "Stalled"


class MoOutcome(NamedTuple):
    beamformer: AnalogBeamformer
    iterations: int
    exit_reason: MoExit
    objectives: list


class GradientScaledBackTracking(BackTrackingLineSearcher):
    """Armijo backtracking whose first trial step is 1/‖grad‖ at every iteration.

    Accepted costs are appended to ``history``; a rejected search leaves the
    point unchanged.
    """

    def __init__(self, gradient_norm, history: list, contraction_factor: float = 0.5,
                 sufficient_decrease: float = 1e-4, max_iterations: int = 60):
        super().__init__(
            contraction_factor=contraction_factor,
            sufficient_decrease=sufficient_decrease,
            max_iterations=max_iterations,
        )
        self._gradient_norm = gradient_norm
        self.history = history

    def search(self, objective, manifold, x, d, f0, df0):
        norm_d = manifold.norm(x, d)
        grad_norm = self._gradient_norm(x)
        if grad_norm <= 0 or norm_d <= 0:
            return 0.0, x
        alpha = 1.0 / grad_norm
        for _ in range(self.max_iterations):
            newx = manifold.retraction(x, alpha * d)
            newf = objective(newx)
            if newf <= f0 + self.sufficient_decrease * alpha * df0:
                self.history.append(float(newf))
                return alpha * norm_d, newx
            alpha *= self.contraction_factor
        return 0.0, x


def _mo_exit(stopping_criterion: str) -> MoExit:
    if "min grad norm" in stopping_criterion:
        return MoExit.GRADIENT_TOLERANCE
    if "max iterations" in stopping_criterion:
        return MoExit.ITERATION_CAP
    return MoExit.STALLED


def mo_solve(
    sub: AnalogSubproblem,
    x0: AnalogBeamformer,
    max_iter: int = 50,
    grad_tol: float = 1e-6,
    *,
    armijo: float = 1e-4,
    backtrack: float = 0.5,
    max_backtracks: int = 60,
) -> MoOutcome:
    """Polak-Ribière conjugate gradient on ComplexCircle(n_ant), the block-support entries of X."""
    shape = (sub.n_rf, sub.block)
    manifold = ComplexCircle(sub.n_rf * sub.block)

    @pymanopt.function.numpy(manifold)
    def cost(z):
        return objective_matrix(sub, _expand_support(z.reshape(shape)))

    @pymanopt.function.numpy(manifold)
    def egrad(z):
        return _support(euclidean_gradient_matrix(sub, _expand_support(z.reshape(shape))), sub.n_rf).ravel()

    last: dict = {}

    def gradient_norm(z: np.ndarray) -> float:
        if "point" not in last or not np.array_equal(last["point"], z):
            riemannian = manifold.projection(z, egrad(z))
            last.update(point=z.copy(), norm=float(manifold.norm(z, riemannian)))
        return last["norm"]

    z0 = x0.support_values().ravel()
    searcher = GradientScaledBackTracking(
        gradient_norm,
        [float(cost(z0))],
        contraction_factor=backtrack,
        sufficient_decrease=armijo,
        max_iterations=max_backtracks,
    )
    optimizer = ConjugateGradient(
        beta_rule="PolakRibiere",
        line_searcher=searcher,
        max_iterations=max_iter,
        min_gradient_norm=grad_tol,
        min_step_size=1e-15,
        max_cost_evaluations=max(5000, (max_backtracks + 2) * (max_iter + 1)),
        verbosity=0,
    )
    problem = pymanopt.Problem(manifold, cost, euclidean_gradient=egrad)
    result = optimizer.run(problem, initial_point=z0)
    reason = _mo_exit(result.stopping_criterion)
    # The optimizer runs on a deep copy of the searcher.
    history = (getattr(optimizer, "line_searcher", None) or searcher).history

    logger.debug("MO finished after %d iterations (%s), objective %.10g", result.iterations, reason.value, history[-1])
    phases = np.angle(np.asarray(result.point).reshape(shape))
    return MoOutcome(AnalogBeamformer(x0.side, phases), int(result.iterations), reason, history)


def bound_matrix(sub: AnalogSubproblem) -> np.ndarray:
    """Bound matrix of an unweighted subproblem (requires R_k = L_k^H)."""
    if not np.allclose(sub.right, conj_t(sub.left), rtol=1e-10, atol=1e-14):
        raise SubproblemConsistencyError(
            "bound matrix needs a subproblem with R_k = L_k^H (unit weights)",
            code="WEIGHTED_SUBPROBLEM",
        )
    return _bound_matrix(sub.left, sub.scale, sub.ratio)


def ei_pass_bound(
    bound: np.ndarray,
    x: AnalogBeamformer,
    bits: Optional[int] = None,
    elements: Optional[Iterable[Sequence[int]]] = None,
) -> AnalogBeamformer:
    """Element sweep maximizing tr(X^H A X) in closed form, θ = −∠(x̂^H A(:,p))."""
    selected = _selection(elements)
    phases = x.phases.copy()
    block = x.block
    scale = float(np.max(np.abs(bound))) if bound.size else 0.0
    for q in range(x.n_rf):
        rows = slice(q * block, (q + 1) * block)
        a_blk = bound[rows, rows]
        z = np.exp(1j * phases[q])
        for i in range(block):
            if selected is not None and (q, q * block + i) not in selected:
                continue
            z_hat = z.copy()
            z_hat[i] = 0.0
            cross = np.vdot(z_hat, a_blk[:, i])
            if abs(cross) <= 1e-300 or abs(cross) <= 1e-15 * scale:
                continue
            theta = float(wrap_phase(-np.angle(cross)))
            if bits is not None:
                theta = float(quantize_phases(theta, bits))
            phases[q, i] = theta
            z[i] = np.exp(1j * theta)
    return AnalogBeamformer(x.side, phases)


def bound_solve(
    bound: np.ndarray,
    x0: AnalogBeamformer,
    sweep_cap: int = 5,
    bits: Optional[int] = None,
) -> tuple[AnalogBeamformer, int]:
    """Repeat closed-form bound sweeps until the phases stop moving."""
    x = x0
    sweeps = 0
    while sweeps < sweep_cap:
        updated = ei_pass_bound(bound, x, bits)
        sweeps += 1
        moved = float(np.max(np.abs(np.exp(1j * updated.phases) - np.exp(1j * x.phases))))
        x = updated
        if moved <= 1e-12:
            break
    return x, sweeps

"""Closed-form digital updates: MMSE combiner, WMMSE precoder, weights and the MMSE bound."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .beamformers import AnalogBeamformer, HybridState
from .channel import ChannelRealization
from .config import SystemConfig
from .errors import DegenerateInputError
from .linalg import conj_t, hermitian, hpd_inverse, hpd_solve, trace_real
from .metrics import mse_matrices

logger = logging.getLogger(__name__)

# Effective channels below this Frobenius norm carry no signal.
SILENT_TOL = 1e-300


@dataclass(frozen=True)
class PrecoderAux:
    g_tilde: np.ndarray  # (K, N_s, N): W_k^H H_k
    beta: np.ndarray  # (K,)
    f_tilde: np.ndarray  # (K, N_t^RF, N_t^RF)


@dataclass(frozen=True)
class CombinerAux:
    g: np.ndarray  # (K, M, N_s): ξ_k⁻¹ H_k F_k
    alpha: np.ndarray  # (K,)


def precoder_aux(channel: ChannelRealization, state: HybridState, config: SystemConfig) -> PrecoderAux:
    """Auxiliary precoder data for the current combiners and weights."""
    W = state.combiners()
    g_tilde = conj_t(W) @ channel.matrices
    beta = (
        config.noise_var * config.n_tx * config.n_rx
        * trace_real(state.weights @ conj_t(state.w_d) @ state.w_d)
        / (config.n_tx_rf * config.n_rx_rf)
    )
    T = g_tilde @ state.f_rf.expand()
    f_tilde = hermitian(conj_t(T) @ state.weights @ T) + beta[:, None, None] * np.eye(config.n_tx_rf)
    return PrecoderAux(g_tilde=g_tilde, beta=beta, f_tilde=f_tilde)


def combiner_aux(channel: ChannelRealization, state: HybridState, config: SystemConfig) -> CombinerAux:
    """Auxiliary combiner data for the current precoders and scaling factors."""
    g = channel.matrices @ state.precoders() / state.xi[:, None, None]
    alpha = config.noise_var * config.n_rx / (config.n_rx_rf * state.xi**2)
    return CombinerAux(g=g, alpha=alpha)


def optimal_digital_combiner(aux: CombinerAux, w_rf: AnalogBeamformer, k: int) -> np.ndarray:
    """(W_RF^H G_k G_k^H W_RF + α_k I)⁻¹ W_RF^H G_k."""
    T = w_rf.expand().conj().T @ aux.g[k]
    system = hermitian(T @ T.conj().T) + aux.alpha[k] * np.eye(T.shape[0])
    return hpd_solve(system, T, what="combiner normal matrix")


def optimal_digital_precoder(
    aux: PrecoderAux,
    f_rf: AnalogBeamformer,
    weights: np.ndarray,
    k: int,
) -> tuple[np.ndarray, float]:
    """Digital precoder of subcarrier ``k`` and its scaling factor; the power budget is met with equality."""
    if not aux.beta[k] > 0:
        raise DegenerateInputError(
            f"precoder scale beta_{k}={aux.beta[k]:.3e} is not positive",
            code="NON_POSITIVE_BETA",
            details={"subcarrier": k},
        )
    rhs = f_rf.expand().conj().T @ aux.g_tilde[k].conj().T @ weights[k]
    unscaled = hpd_solve(aux.f_tilde[k], rhs, what="precoder normal matrix")
    norm2 = float(np.sum(np.abs(unscaled) ** 2))
    if norm2 <= 0.0:
        raise DegenerateInputError(
            f"subcarrier {k} carries no signal",
            code="SILENT_SUBCARRIER",
            details={"subcarrier": k},
        )
    xi = 1.0 / np.sqrt(f_rf.n_ant / f_rf.n_rf * norm2)
    return xi * unscaled, float(xi)


def optimal_weight(mse: np.ndarray) -> np.ndarray:
    """Λ = E⁻¹ (single matrix or stack)."""
    return hpd_inverse(mse, what="MSE matrix")


def default_digital_precoder(config: SystemConfig) -> np.ndarray:
    """Full-power placeholder √(N_t^RF/(N N_s))·[I; 0] for every subcarrier."""
    block = np.zeros((config.n_tx_rf, config.n_streams), dtype=complex)
    block[: config.n_streams, : config.n_streams] = np.eye(config.n_streams)
    block *= np.sqrt(config.n_tx_rf / (config.n_tx * config.n_streams))
    return np.broadcast_to(block, (config.n_subcarriers,) + block.shape).copy()


def update_precoders(channel: ChannelRealization, state: HybridState, config: SystemConfig) -> HybridState:
    """Refresh every F_D,k and ξ_k; silent subcarriers keep their previous values."""
    aux = precoder_aux(channel, state, config)
    f_d = state.f_d.copy()
    xi = state.xi.copy()
    silent = state.silent.copy()
    for k in range(config.n_subcarriers):
        if np.linalg.norm(aux.g_tilde[k]) <= SILENT_TOL:
            silent[k] = True
            continue
        f_d[k], xi[k] = optimal_digital_precoder(aux, state.f_rf, state.weights, k)
        silent[k] = False
    return state.replace(f_d=f_d, xi=xi, silent=silent)


def update_combiners(channel: ChannelRealization, state: HybridState, config: SystemConfig) -> HybridState:
    aux = combiner_aux(channel, state, config)
    w_d = np.stack([optimal_digital_combiner(aux, state.w_rf, k) for k in range(config.n_subcarriers)])
    return state.replace(w_d=w_d)


def update_weights(channel: ChannelRealization, state: HybridState, config: SystemConfig) -> HybridState:
    return state.replace(weights=optimal_weight(mse_matrices(channel, state, config)))


def bound_matrix(rows: np.ndarray, scale: np.ndarray, ratio: float) -> np.ndarray:
    """Σ_k s_k⁻¹ L_k^H (ρI + s_k⁻¹ L_k L_k^H)⁻¹ L_k over non-silent subcarriers.

    ``rows`` has shape (K, N_s, D).
    """
    dim = rows.shape[-1]
    total = np.zeros((dim, dim), dtype=complex)
    n_s = rows.shape[1]
    for k in range(rows.shape[0]):
        L = rows[k]
        if np.linalg.norm(L) <= SILENT_TOL:
            continue
        if not scale[k] > 0:
            raise DegenerateInputError(
                f"bound scale {scale[k]:.3e} on subcarrier {k} is not positive",
                code="NON_POSITIVE_PHI",
                details={"subcarrier": k},
            )
        inner = ratio * np.eye(n_s) + hermitian(L @ L.conj().T) / scale[k]
        total += L.conj().T @ hpd_solve(inner, L, what="bound inner matrix") / scale[k]
    return hermitian(total)


def mmse_bound_matrix(aux: PrecoderAux, config: SystemConfig) -> np.ndarray:
    """Precoder-side bound matrix A for unit weights (β_k then equals φ_k)."""
    return bound_matrix(aux.g_tilde, aux.beta, config.n_tx_rf / config.n_tx)


def mmse_upper_bound(bound: np.ndarray, f_rf: AnalogBeamformer, n_subcarriers: int) -> float:
    """J_UB(F_RF) = N²/N_t^RF − N/(K N_t^RF)·tr(F_RF^H A F_RF)."""
    n, n_rf = f_rf.n_ant, f_rf.n_rf
    F = f_rf.expand()
    quad = float(np.real(np.trace(F.conj().T @ bound @ F)))
    return n * n / n_rf - n / (n_subcarriers * n_rf) * quad


def mmse_objective(aux: PrecoderAux, f_rf: AnalogBeamformer) -> float:
    """(1/K) Σ_k tr((I + φ_k⁻¹ G̃_k F F^H G̃_k^H)⁻¹), the MMSE analog-precoder objective."""
    T = aux.g_tilde @ f_rf.expand()
    n_s = T.shape[1]
    total = 0.0
    for k in range(T.shape[0]):
        if np.linalg.norm(T[k]) <= SILENT_TOL:
            total += n_s
            continue
        inner = np.eye(n_s) + hermitian(T[k] @ T[k].conj().T) / aux.beta[k]
        total += float(np.real(np.trace(hpd_inverse(inner, what="MMSE matrix", cond_limit=None))))
    return total / T.shape[0]

"""Spectral efficiency, MSE matrices and the WMMSE objective."""

from __future__ import annotations

import logging
from typing import NamedTuple

import numpy as np

from .beamformers import AnalogBeamformer, HybridState
from .channel import ChannelRealization
from .config import SystemConfig
from .linalg import conj_t, hermitian, logdet_hpd, trace_real

logger = logging.getLogger(__name__)

LN2 = np.log(2.0)
SINGULAR_TOL = 1e-12


class RateEvaluation(NamedTuple):
    bits: float
    degenerate: bool


def spectral_efficiency(channel: ChannelRealization, state: HybridState, config: SystemConfig) -> RateEvaluation:
    """Average over subcarriers of log₂|I + σ⁻² W^H H F F^H H^H W (W^H W)⁻¹|."""
    F = state.precoders()
    W = state.combiners()
    S = conj_t(W) @ channel.matrices @ F
    signal = hermitian(S @ conj_t(S)) / config.noise_var
    gram = hermitian(conj_t(W) @ W)

    degenerate = False
    smallest = np.linalg.eigvalsh(gram)[:, 0]
    if np.any(smallest <= SINGULAR_TOL):
        degenerate = True
        logger.debug("Combiner Gram matrix singular on %d subcarriers", int(np.sum(smallest <= SINGULAR_TOL)))
        gram = gram + SINGULAR_TOL * np.eye(gram.shape[-1])

    # |I + Q G⁻¹| = |G + Q| / |G|, both Hermitian PD.
    per_k = logdet_hpd(gram + signal, what="combiner Gram plus signal") - logdet_hpd(gram, what="combiner Gram")
    rate = max(0.0, float(np.mean(per_k)) / LN2)
    return RateEvaluation(rate, degenerate)


def analog_output_rate(
    channel: ChannelRealization,
    f_rf: AnalogBeamformer,
    f_d: np.ndarray,
    w_rf: AnalogBeamformer,
    config: SystemConfig,
) -> float:
    """Rate seen at the analog combiner output; reported when N_r^RF > N_s."""
    T = conj_t(w_rf.expand()) @ channel.matrices @ (f_rf.expand() @ f_d)
    gain = config.n_rx_rf / (config.noise_var * config.n_rx)
    Z = np.eye(config.n_rx_rf) + gain * hermitian(T @ conj_t(T))
    return max(0.0, float(np.mean(logdet_hpd(Z, what="analog output covariance"))) / LN2)


def mse_matrices(channel: ChannelRealization, state: HybridState, config: SystemConfig) -> np.ndarray:
    """Modified MSE matrices E_k of every subcarrier, shape (K, N_s, N_s)."""
    F = state.precoders()
    W = state.combiners()
    S = conj_t(W) @ channel.matrices @ F
    inv_xi = (1.0 / state.xi)[:, None, None]
    n_s = config.n_streams
    E = (
        np.eye(n_s)
        - inv_xi * (conj_t(S) + S)
        + inv_xi**2 * config.noise_var * (conj_t(W) @ W)
        + inv_xi**2 * (S @ conj_t(S))
    )
    return hermitian(E)


def mse_matrix(channel: ChannelRealization, state: HybridState, k: int, config: SystemConfig) -> np.ndarray:
    F = state.f_rf.expand() @ state.f_d[k]
    W = state.w_rf.expand() @ state.w_d[k]
    S = W.conj().T @ channel.matrices[k] @ F
    inv_xi = 1.0 / state.xi[k]
    E = (
        np.eye(config.n_streams)
        - inv_xi * (S.conj().T + S)
        + inv_xi**2 * config.noise_var * (W.conj().T @ W)
        + inv_xi**2 * (S @ S.conj().T)
    )
    return hermitian(E)


def wmmse_objective(channel: ChannelRealization, state: HybridState, config: SystemConfig) -> float:
    """(1/K) Σ_k tr(Λ_k E_k) − ln|Λ_k|."""
    E = mse_matrices(channel, state, config)
    log_det = logdet_hpd(state.weights, what="weight matrix")
    return float(np.mean(trace_real(state.weights @ E) - log_det))


def mmse_rate(channel: ChannelRealization, state: HybridState, config: SystemConfig) -> float:
    """(1/K) Σ_k log₂|I + α_k⁻¹ G_k^H W_RF W_RF^H G_k| with G_k = ξ_k⁻¹ H_k F_k."""
    G = channel.matrices @ state.precoders() / state.xi[:, None, None]
    alpha = config.noise_var * config.n_rx / (config.n_rx_rf * state.xi**2)
    T = conj_t(state.w_rf.expand()) @ G
    Z = np.eye(config.n_streams) + hermitian(conj_t(T) @ T) / alpha[:, None, None]
    return float(np.mean(logdet_hpd(Z, what="MMSE information matrix"))) / LN2


def equivalence_gap(channel: ChannelRealization, state: HybridState, config: SystemConfig) -> float:
    """|spectral_efficiency − mmse_rate|; vanishes when W_D is the MMSE combiner."""
    return abs(spectral_efficiency(channel, state, config).bits - mmse_rate(channel, state, config))


def reported_rate(channel: ChannelRealization, state: HybridState, config: SystemConfig) -> RateEvaluation:
    """Rate used for traces and results: spectral efficiency when N_r^RF = N_s, else the analog-output rate."""
    if config.n_rx_rf == config.n_streams:
        return spectral_efficiency(channel, state, config)
    return RateEvaluation(analog_output_rate(channel, state.f_rf, state.f_d, state.w_rf, config), False)

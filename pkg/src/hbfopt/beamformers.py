"""Analog beamformer and hybrid state containers."""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional

import numpy as np

from .config import SystemConfig
from .errors import InvariantViolation
from .linalg import hermitian_residual

TWO_PI = 2.0 * np.pi


class Side(str, Enum):
    TX = "tx"
    RX = "rx"


def wrap_phase(theta):
    """Reduce phases into [0, 2π)."""
    wrapped = np.mod(theta, TWO_PI)
    # np.mod can round a tiny negative up to exactly 2π.
    return np.where(wrapped >= TWO_PI, 0.0, wrapped)


def phase_grid(bits: int) -> np.ndarray:
    """The 2^B-point phase set {2πn/2^B}."""
    if bits < 1:
        raise ValueError("bits must be >= 1")
    levels = 1 << bits
    return TWO_PI * np.arange(levels) / levels


def quantize_phases(phases: np.ndarray, bits: int) -> np.ndarray:
    """Round every phase to the nearest point of ``phase_grid(bits)``."""
    grid = phase_grid(bits)
    levels = grid.size
    idx = np.rint(np.asarray(phases) / (TWO_PI / levels)).astype(np.int64) % levels
    return grid[idx]


@dataclass
class AnalogBeamformer:
    """Partially-connected analog matrix stored as one phase vector per RF chain.

    ``phases`` has shape (n_rf, block); chain q drives antennas
    q*block .. (q+1)*block - 1.
    """

    side: Side
    phases: np.ndarray

    def __post_init__(self) -> None:
        self.phases = np.array(wrap_phase(np.asarray(self.phases, dtype=float)), dtype=float)
        if self.phases.ndim != 2 or self.phases.size == 0:
            raise InvariantViolation("phases must be a non-empty (n_rf, block) array", code="BAD_SHAPE")
        if not np.all(np.isfinite(self.phases)):
            raise InvariantViolation("phases must be finite", code="NON_FINITE_PHASE")

    @property
    def n_rf(self) -> int:
        return self.phases.shape[0]

    @property
    def block(self) -> int:
        return self.phases.shape[1]

    @property
    def n_ant(self) -> int:
        return self.n_rf * self.block

    def support_values(self) -> np.ndarray:
        """Unit-modulus entries on block support, shape (n_rf, block)."""
        return np.exp(1j * self.phases)

    def expand(self) -> np.ndarray:
        """Block-diagonal n_ant × n_rf matrix with unit-modulus non-zeros."""
        matrix = np.zeros((self.n_ant, self.n_rf), dtype=complex)
        values = self.support_values()
        for q in range(self.n_rf):
            matrix[q * self.block:(q + 1) * self.block, q] = values[q]
        return matrix

    def block_mask(self) -> np.ndarray:
        return block_mask(self.n_ant, self.n_rf)

    def copy(self) -> AnalogBeamformer:
        return AnalogBeamformer(self.side, self.phases.copy())

    def with_phase(self, q: int, p: int, theta: float) -> AnalogBeamformer:
        """Copy with the element in global antenna row ``p`` of chain ``q`` set to ``theta``."""
        local = p - q * self.block
        if not 0 <= local < self.block:
            raise IndexError(f"row {p} is outside the block of chain {q}")
        phases = self.phases.copy()
        phases[q, local] = theta
        return AnalogBeamformer(self.side, phases)

    def quantized(self, bits: int) -> AnalogBeamformer:
        return AnalogBeamformer(self.side, quantize_phases(self.phases, bits))

    @classmethod
    def random(
        cls,
        side: Side,
        n_ant: int,
        n_rf: int,
        rng: np.random.Generator,
        bits: Optional[int] = None,
    ) -> AnalogBeamformer:
        """I.i.d. uniform phases, drawn from the 2^B set when ``bits`` is given."""
        shape = (n_rf, n_ant // n_rf)
        if bits is None:
            phases = rng.uniform(0.0, TWO_PI, size=shape)
        else:
            grid = phase_grid(bits)
            phases = grid[rng.integers(0, grid.size, size=shape)]
        return cls(side, phases)


def block_mask(n_ant: int, n_rf: int) -> np.ndarray:
    """Boolean block-support indicator of an n_ant × n_rf partially-connected matrix."""
    block = n_ant // n_rf
    mask = np.zeros((n_ant, n_rf), dtype=bool)
    for q in range(n_rf):
        mask[q * block:(q + 1) * block, q] = True
    return mask


@dataclass
class HybridState:
    """Analog and per-subcarrier digital beamformers with scaling factors and weights."""

    f_rf: AnalogBeamformer
    w_rf: AnalogBeamformer
    f_d: np.ndarray  # (K, n_tx_rf, n_streams)
    w_d: np.ndarray  # (K, n_rx_rf, n_streams)
    xi: np.ndarray  # (K,)
    weights: np.ndarray  # (K, n_streams, n_streams)
    silent: Optional[np.ndarray] = None  # (K,) bool, subcarriers without signal

    def __post_init__(self) -> None:
        if self.silent is None:
            self.silent = np.zeros(self.xi.shape[0], dtype=bool)

    @property
    def n_subcarriers(self) -> int:
        return self.f_d.shape[0]

    def precoders(self) -> np.ndarray:
        """F_k = F_RF F_D,k for every subcarrier, shape (K, N, N_s)."""
        return self.f_rf.expand() @ self.f_d

    def combiners(self) -> np.ndarray:
        """W_k = W_RF W_D,k for every subcarrier, shape (K, M, N_s)."""
        return self.w_rf.expand() @ self.w_d

    def copy(self) -> HybridState:
        return HybridState(
            f_rf=self.f_rf.copy(),
            w_rf=self.w_rf.copy(),
            f_d=self.f_d.copy(),
            w_d=self.w_d.copy(),
            xi=self.xi.copy(),
            weights=self.weights.copy(),
            silent=self.silent.copy(),
        )

    def replace(self, **changes) -> HybridState:
        return replace(self, **changes)


def check_state(state: HybridState, config: SystemConfig, *, tol: float = 1e-10) -> None:
    """Raise InvariantViolation if ``state`` breaks a structural invariant."""
    K = config.n_subcarriers
    expected = {
        "f_d": (K, config.n_tx_rf, config.n_streams),
        "w_d": (K, config.n_rx_rf, config.n_streams),
        "weights": (K, config.n_streams, config.n_streams),
        "xi": (K,),
    }
    for name, shape in expected.items():
        actual = getattr(state, name).shape
        if actual != shape:
            raise InvariantViolation(f"{name} has shape {actual}, expected {shape}", code="BAD_SHAPE")
    if state.f_rf.n_ant != config.n_tx or state.f_rf.n_rf != config.n_tx_rf:
        raise InvariantViolation("analog precoder does not match the transmit array", code="BAD_SHAPE")
    if state.w_rf.n_ant != config.n_rx or state.w_rf.n_rf != config.n_rx_rf:
        raise InvariantViolation("analog combiner does not match the receive array", code="BAD_SHAPE")

    power = np.sum(np.abs(state.f_d) ** 2, axis=(1, 2))
    budget = config.n_tx_rf / config.n_tx
    if np.any(power > budget + tol):
        raise InvariantViolation(
            f"digital precoder power {float(np.max(power)):.12g} exceeds {budget:.12g}",
            code="POWER_EXCEEDED",
        )
    if np.any(~np.isfinite(state.xi)) or np.any(state.xi <= 0):
        raise InvariantViolation("scaling factors must be positive", code="NON_POSITIVE_XI")
    for k in range(K):
        lam = state.weights[k]
        if hermitian_residual(lam) > tol:
            raise InvariantViolation(f"weight matrix {k} is not Hermitian", code="WEIGHT_NOT_HERMITIAN")
        if np.linalg.eigvalsh(0.5 * (lam + lam.conj().T))[0] <= 0:
            raise InvariantViolation(f"weight matrix {k} is not positive definite", code="WEIGHT_NOT_PD")

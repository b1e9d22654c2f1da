"""Seeded wideband clustered mmWave channel generation."""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .beamformers import TWO_PI, wrap_phase
from .config import SystemConfig
from .errors import ChannelError, ReportingError

logger = logging.getLogger(__name__)

DUMP_MAGIC = b"HBFC"
DUMP_VERSION = 1
DUMP_HEADER = struct.Struct("<4sIIIIQ4x")


@dataclass(frozen=True)
class ArrayGeometry:
    """Half-wavelength spaced uniform linear array."""

    n_elements: int

    def __post_init__(self) -> None:
        if self.n_elements < 1:
            raise ValueError("n_elements must be >= 1")


@dataclass(frozen=True)
class ChannelRealization:
    """K per-subcarrier M×N channel matrices and the rays that generated them."""

    matrices: np.ndarray  # (K, M, N)
    gains: np.ndarray  # (N_C, N_R)
    aoa: np.ndarray  # (N_C, N_R)
    aod: np.ndarray  # (N_C, N_R)
    mean_angles: np.ndarray  # (N_C, 2): receive, transmit
    delays: np.ndarray  # (N_C,)
    seed: int

    @property
    def n_subcarriers(self) -> int:
        return self.matrices.shape[0]

    @property
    def n_rx(self) -> int:
        return self.matrices.shape[1]

    @property
    def n_tx(self) -> int:
        return self.matrices.shape[2]


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator; distinct ``stream`` values never overlap."""
    bit_generator = np.random.Philox(seed)
    if stream:
        bit_generator = bit_generator.jumped(stream)
    return np.random.Generator(bit_generator)


def ula_response(angle: float, geometry: ArrayGeometry) -> np.ndarray:
    """a(θ) = [1, e^{jπ sinθ}, …, e^{j(N−1)π sinθ}]^T / √N."""
    n = geometry.n_elements
    return np.exp(1j * np.pi * np.arange(n) * np.sin(angle)) / np.sqrt(n)


def ula_responses(angles: np.ndarray, n_elements: int) -> np.ndarray:
    """Stack of array responses with a trailing element axis."""
    angles = np.asarray(angles, dtype=float)
    return np.exp(1j * np.pi * np.sin(angles)[..., None] * np.arange(n_elements)) / np.sqrt(n_elements)


def sample_laplacian_angle(mean: float, spread: float, rng: np.random.Generator) -> float:
    """Laplacian(mean, spread) draw reduced into [0, 2π)."""
    if spread <= 0:
        raise ValueError("spread must be > 0")
    return float(wrap_phase(mean + rng.laplace(0.0, spread)))


def generate_channel(config: SystemConfig, seed: int) -> ChannelRealization:
    """Draw one clustered channel realization; a pure function of (config, seed).

    Draw order: cluster mean angles, ray angles (receive then transmit per
    ray), ray gains, then per-cluster delays in delay_tap mode.
    """
    params = config.cluster
    K, M, N = config.n_subcarriers, config.n_rx, config.n_tx
    n_c, n_r = params.n_clusters, params.n_rays

    if params.delay_mode == "delay_tap" and params.max_delay_taps > K:
        raise ChannelError(
            f"max_delay_taps={params.max_delay_taps} exceeds the {K} subcarriers",
            code="DELAY_TOO_LONG",
        )

    rng = make_rng(seed)
    mean_angles = rng.uniform(0.0, TWO_PI, size=(n_c, 2))
    aoa = np.empty((n_c, n_r))
    aod = np.empty((n_c, n_r))
    for c in range(n_c):
        for l in range(n_r):
            aoa[c, l] = sample_laplacian_angle(mean_angles[c, 0], params.angle_spread, rng)
            aod[c, l] = sample_laplacian_angle(mean_angles[c, 1], params.angle_spread, rng)
    gains = (rng.standard_normal((n_c, n_r)) + 1j * rng.standard_normal((n_c, n_r))) / np.sqrt(2.0)

    if params.delay_mode == "delay_tap":
        delays = 1 + rng.integers(0, params.max_delay_taps, size=n_c)
    else:
        delays = np.ones(n_c, dtype=np.int64)

    scale = np.sqrt(M * N / (n_c * n_r))
    a_r = ula_responses(aoa, M)
    a_t = ula_responses(aod, N)
    per_cluster = scale * np.einsum("cl,clm,cln->cmn", gains, a_r, np.conj(a_t))
    subcarrier = np.exp(-2j * np.pi * np.outer(np.arange(K), delays) / K)
    matrices = np.einsum("kc,cmn->kmn", subcarrier, per_cluster)

    logger.debug("Generated channel seed=%d K=%d M=%d N=%d", seed, K, M, N)
    return ChannelRealization(
        matrices=matrices,
        gains=gains,
        aoa=aoa,
        aod=aod,
        mean_angles=mean_angles,
        delays=np.asarray(delays, dtype=np.int64),
        seed=int(seed),
    )


def zero_channel(config: SystemConfig, seed: int = 0) -> ChannelRealization:
    """Realization with every ray gain zero (no signal path)."""
    base = generate_channel(config, seed)
    return ChannelRealization(
        matrices=np.zeros_like(base.matrices),
        gains=np.zeros_like(base.gains),
        aoa=base.aoa,
        aod=base.aod,
        mean_angles=base.mean_angles,
        delays=base.delays,
        seed=base.seed,
    )


def write_channel_dump(realization: ChannelRealization, path: Path) -> Path:
    """Write the K matrices as little-endian complex128 after a 32-byte header."""
    K, M, N = realization.matrices.shape
    header = DUMP_HEADER.pack(DUMP_MAGIC, DUMP_VERSION, M, N, K, realization.seed)
    body = np.ascontiguousarray(realization.matrices, dtype="<c16").tobytes(order="C")
    try:
        with open(path, "wb") as f:
            f.write(header)
            f.write(body)
    except OSError as exc:
        raise ReportingError(f"Failed to write channel dump: {exc}", code="WRITE_FAILED", details={"path": str(path)}) from exc
    return path


def read_channel_dump(path: Path) -> tuple[np.ndarray, int]:
    """Read a channel dump; returns (matrices of shape (K, M, N), seed)."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise ReportingError(f"Failed to read channel dump: {exc}", code="READ_FAILED", details={"path": str(path)}) from exc
    if len(data) < DUMP_HEADER.size:
        raise ChannelError("Channel dump is truncated", code="DUMP_TRUNCATED", details={"path": str(path)})
    magic, version, M, N, K, seed = DUMP_HEADER.unpack_from(data)
    if magic != DUMP_MAGIC or version != DUMP_VERSION:
        raise ChannelError("Not a channel dump", code="DUMP_BAD_MAGIC", details={"path": str(path)})
    expected = DUMP_HEADER.size + K * M * N * 16
    if len(data) != expected:
        raise ChannelError(
            f"Channel dump has {len(data)} bytes, expected {expected}",
            code="DUMP_TRUNCATED",
            details={"path": str(path)},
        )
    matrices = np.frombuffer(data, dtype="<c16", offset=DUMP_HEADER.size).reshape(K, M, N)
    return matrices.astype(complex), int(seed)

"""Configuration management for hbfopt."""

from __future__ import annotations

import math
import os
from contextlib import suppress
from pathlib import Path
from typing import Any, Dict, List, Optional, Set

import toml
from pydantic import BaseModel, Field, PrivateAttr, ValidationError, field_validator, model_validator

from .errors import ConfigurationError
from .variants import AlgorithmVariant, InitStrategy, StepOrder

DEFAULT_ANGLE_SPREAD = math.radians(10.0)


class ClusterParams(BaseModel):
    """Clustered geometric channel statistics."""

    n_clusters: int = Field(default=5, ge=1, description="Number of scattering clusters N_C")
    n_rays: int = Field(default=10, ge=1, description="Rays per cluster N_R")
    angle_spread: float = Field(
        default=DEFAULT_ANGLE_SPREAD,
        gt=0.0,
        description="Laplacian scale of ray angles around the cluster mean, radians",
    )
    delay_mode: str = Field(
        default="verbatim",
        description="'verbatim' (cluster-independent subcarrier phase) or 'delay_tap'",
    )
    max_delay_taps: int = Field(default=1, ge=1, description="Largest per-cluster delay in taps (delay_tap mode)")

    @field_validator("delay_mode", mode="before")
    @classmethod
    def normalize_delay_mode(cls, value: object) -> str:
        lowered = str(value).strip().lower().replace("-", "_")
        if lowered not in {"verbatim", "delay_tap"}:
            raise ValueError("delay_mode must be one of: verbatim, delay_tap")
        return lowered

    model_config = {"extra": "forbid", "frozen": True}


class SolverControls(BaseModel):
    """Stop conditions and tolerances of the alternating optimization."""

    outer_cap: int = Field(default=30, ge=1, description="Maximum outer iterations")
    outer_rel_tol: float = Field(default=1e-4, gt=0.0, description="Relative rate change that ends the run")
    ei_sweep_cap: int = Field(default=5, ge=1, description="Element-iteration sweeps per analog step")
    ei_rel_tol: float = Field(default=1e-4, gt=0.0, description="Relative objective change ending EI sweeps")
    mo_iter_cap: int = Field(default=50, ge=1, description="Conjugate-gradient iterations per analog step")
    mo_grad_tol: float = Field(default=1e-6, gt=0.0, description="Riemannian gradient norm ending MO")
    line_search_tol: float = Field(default=1e-3, gt=0.0, description="Golden-section bracket width, radians")
    monotonic_slack: float = Field(default=1e-9, gt=0.0, description="Absolute slack of the trace contracts")
    step_order: StepOrder = Field(default=StepOrder.PRECODER_FIRST, description="Order of the three steps")
    check_invariants: bool = Field(default=True, description="Validate the hybrid state after every step")

    @field_validator("step_order", mode="before")
    @classmethod
    def normalize_step_order(cls, value: object) -> object:
        if isinstance(value, str):
            return value.strip().lower().replace("-", "_")
        return value

    model_config = {"extra": "forbid", "frozen": True}


class SystemConfig(BaseModel):
    """Dimensions, SNR, channel statistics and solver controls of one system."""

    n_tx: int = Field(default=64, ge=1, description="Transmit antennas N")
    n_rx: int = Field(default=32, ge=1, description="Receive antennas M")
    n_tx_rf: int = Field(default=4, ge=1, description="Transmit RF chains")
    n_rx_rf: int = Field(default=2, ge=1, description="Receive RF chains")
    n_streams: int = Field(default=2, ge=1, description="Data streams N_s")
    n_subcarriers: int = Field(default=64, ge=1, description="Subcarriers K")
    snr_db: float = Field(default=-6.0, description="SNR in dB; noise variance is 10^(-snr/10)")
    quant_bits: Optional[int] = Field(None, ge=1, description="Phase-shifter resolution for quantized variants")
    seed: int = Field(default=0, ge=0, lt=2**64, description="Base seed; realization i uses seed + i")
    cluster: ClusterParams = Field(default_factory=ClusterParams)
    controls: SolverControls = Field(default_factory=SolverControls)

    @model_validator(mode="after")
    def check_dimensions(self) -> SystemConfig:
        if self.n_tx % self.n_tx_rf:
            raise ValueError(f"n_tx={self.n_tx} is not divisible by n_tx_rf={self.n_tx_rf}")
        if self.n_rx % self.n_rx_rf:
            raise ValueError(f"n_rx={self.n_rx} is not divisible by n_rx_rf={self.n_rx_rf}")
        if not self.n_streams <= self.n_rx_rf <= self.n_rx:
            raise ValueError("require n_streams <= n_rx_rf <= n_rx")
        if not self.n_streams <= self.n_tx_rf <= self.n_tx:
            raise ValueError("require n_streams <= n_tx_rf <= n_tx")
        return self

    @property
    def noise_var(self) -> float:
        return 10.0 ** (-self.snr_db / 10.0)

    @property
    def tx_block(self) -> int:
        return self.n_tx // self.n_tx_rf

    @property
    def rx_block(self) -> int:
        return self.n_rx // self.n_rx_rf

    def with_snr(self, snr_db: float) -> SystemConfig:
        return self.model_copy(update={"snr_db": float(snr_db)})

    model_config = {"extra": "forbid", "frozen": True}


class ExperimentSpec(BaseModel):
    """A seeded sweep over SNR, variants and phase-shifter resolution."""

    _explicit_fields: Set[str] = PrivateAttr(default_factory=set)

    system: SystemConfig = Field(default_factory=SystemConfig)
    snr_grid: List[float] = Field(
        default_factory=lambda: [-14.0, -12.0, -10.0, -8.0, -6.0, -4.0, -2.0, 0.0],
        description="SNR values in dB",
    )
    variants: List[str] = Field(
        default_factory=lambda: ["wmmse-ei", "wmmse-mo", "mmse-ei"],
        description="Variant names, e.g. wmmse-ei or wmmse-ei-q",
    )
    n_realizations: int = Field(default=50, ge=1, description="Channel realizations per grid point")
    init_strategy: InitStrategy = Field(default=InitStrategy.MMSE, description="random or mmse warm start")
    quant_grid: List[int] = Field(default_factory=list, description="Bit counts swept by quantized variants")
    concurrency: int = Field(default=4, ge=1, le=64, description="Realizations processed concurrently")
    write_traces: bool = Field(default=False, description="Write one convergence trace JSON per run")
    record_wall_time: bool = Field(default=False, description="Record wall time; rows are then not reproducible")
    output_dir: Path = Field(default=Path("runs"), description="Output directory for results")
    debug: bool = Field(default=False, description="Enable debug logging")

    @field_validator("snr_grid")
    @classmethod
    def validate_snr_grid(cls, value: List[float]) -> List[float]:
        if not value:
            raise ValueError("snr_grid must not be empty")
        return [float(v) for v in value]

    @field_validator("variants")
    @classmethod
    def validate_variants(cls, value: List[str]) -> List[str]:
        if not value:
            raise ValueError("variants must not be empty")
        normalized = []
        for name in value:
            # Bits are resolved later against quant_grid; parse the kind only.
            kind_part = name.split(":", 1)[0]
            try:
                parsed = AlgorithmVariant.parse(kind_part, bits=1)
            except ConfigurationError as exc:
                raise ValueError(str(exc)) from exc
            suffix = name.split(":", 1)[1] if ":" in name else None
            normalized.append(parsed.kind.value + (f":{int(suffix)}" if suffix else ""))
        return normalized

    @field_validator("quant_grid")
    @classmethod
    def validate_quant_grid(cls, value: List[int]) -> List[int]:
        if any(int(b) < 1 for b in value):
            raise ValueError("quant_grid entries must be >= 1")
        return [int(b) for b in value]

    @field_validator("init_strategy", mode="before")
    @classmethod
    def normalize_init(cls, value: object) -> object:
        if isinstance(value, str):
            lowered = value.strip().lower().replace("-", "").replace("_", "")
            return lowered[:-3] if lowered.endswith("ini") else lowered
        return value

    @model_validator(mode="after")
    def check_quantized_bits(self) -> ExperimentSpec:
        for name in self.variants:
            kind, _, suffix = name.partition(":")
            if kind.endswith("-q") or kind.endswith("-u"):
                if not suffix and not self.quant_grid and self.system.quant_bits is None:
                    raise ValueError(
                        f"variant {kind} needs bits: set system.quant_bits, quant_grid or '{kind}:<bits>'"
                    )
        return self

    model_config = {"extra": "forbid"}

    def resolved_variants(self, bits: Optional[int]) -> List[AlgorithmVariant]:
        """Variants at one quant-grid point (``bits`` None when there is no grid)."""
        resolved = []
        for name in self.variants:
            kind, _, suffix = name.partition(":")
            parsed = AlgorithmVariant.parse(kind, bits=1)
            if not parsed.quantized:
                resolved.append(AlgorithmVariant(parsed.kind))
                continue
            if suffix:
                chosen = int(suffix)
            elif bits is not None:
                chosen = bits
            else:
                chosen = self.system.quant_bits
            resolved.append(AlgorithmVariant(parsed.kind, chosen))
        return resolved

    @classmethod
    def from_mapping(cls, data: Dict[str, Any]) -> ExperimentSpec:
        """Build a spec from the sectioned TOML layout."""
        system = dict(data.get("system", {}))
        if "channel" in data:
            system["cluster"] = dict(data["channel"])
        if "solver" in data:
            system["controls"] = dict(data["solver"])
        payload: Dict[str, Any] = dict(data.get("experiment", {}))
        payload.update(data.get("output", {}))
        payload["system"] = system
        return cls.validated(payload)

    @classmethod
    def validated(cls, payload: Dict[str, Any]) -> ExperimentSpec:
        try:
            return cls.model_validate(payload)
        except ValidationError as exc:
            raise ConfigurationError(f"Invalid experiment spec: {exc}", code="INVALID_SPEC") from exc

    @classmethod
    def from_toml(cls, path: Path) -> ExperimentSpec:
        try:
            data = toml.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError as exc:
            raise ConfigurationError(f"Spec file not found: {path}", code="SPEC_MISSING") from exc
        except toml.TomlDecodeError as exc:
            raise ConfigurationError(f"Spec file is not valid TOML: {exc}", code="SPEC_SYNTAX") from exc
        return cls.from_mapping(data)

    @classmethod
    def from_env(cls, path: Optional[Path] = None) -> ExperimentSpec:
        """Load the spec file (if any) and apply ``HBFOPT_*`` environment overrides."""

        def optional_env(name: str) -> Optional[str]:
            value = os.getenv(name)
            return value if value not in {None, ""} else None

        spec_path = path or Path(os.getenv("HBFOPT_CONFIG", "config.toml"))
        spec = cls.from_toml(spec_path) if spec_path.exists() else cls()

        overrides: Dict[str, Any] = {}
        if (value := optional_env("HBFOPT_OUTPUT_DIR")) is not None:
            overrides["output_dir"] = value
        if (value := optional_env("HBFOPT_CONCURRENCY")) is not None:
            with suppress(ValueError):
                overrides["concurrency"] = int(value)
        if (value := optional_env("HBFOPT_N_REALIZATIONS")) is not None:
            with suppress(ValueError):
                overrides["n_realizations"] = int(value)
        if (value := optional_env("HBFOPT_DEBUG")) is not None:
            overrides["debug"] = value.strip().lower() in {"1", "true", "yes", "on"}

        return spec.with_overrides(overrides) if overrides else spec

    def with_overrides(self, overrides: Dict[str, Any]) -> ExperimentSpec:
        """Return a copy with ``overrides`` applied; keys may be bare field names or dotted paths."""
        data = self.model_dump(mode="json")
        explicit = set(self._explicit_fields)
        for raw_key, value in overrides.items():
            path = resolve_field_path(raw_key)
            target = data
            for part in path[:-1]:
                target = target[part]
            target[path[-1]] = value
            explicit.add(".".join(path))
        spec = self.validated(data)
        spec._explicit_fields.update(explicit)
        return spec

    @property
    def explicit_fields(self) -> Set[str]:
        return set(self._explicit_fields)


_NESTED = {
    (): ExperimentSpec,
    ("system",): SystemConfig,
    ("system", "cluster"): ClusterParams,
    ("system", "controls"): SolverControls,
}

_SECTION_ALIASES = {
    "experiment": (),
    "output": (),
    "system": ("system",),
    "channel": ("system", "cluster"),
    "cluster": ("system", "cluster"),
    "solver": ("system", "controls"),
    "controls": ("system", "controls"),
}


def _field_index() -> Dict[str, tuple]:
    index: Dict[str, tuple] = {}
    for prefix, model in _NESTED.items():
        for name, info in model.model_fields.items():
            if info.annotation in (SystemConfig, ClusterParams, SolverControls):
                continue
            index.setdefault(name, prefix + (name,))
    return index


def resolve_field_path(key: str) -> tuple:
    """Map ``snr-db``, ``system.snr_db`` or ``solver.outer_cap`` to a nested field path."""
    normalized = key.strip().lstrip("-").replace("-", "_")
    parts = normalized.split(".")
    if len(parts) > 1:
        prefix = _SECTION_ALIASES.get(parts[0])
        if prefix is None:
            raise ConfigurationError(f"Unknown section in override '{key}'", code="BAD_OVERRIDE")
        model = _NESTED[prefix]
        if parts[-1] not in model.model_fields:
            raise ConfigurationError(f"Unknown field in override '{key}'", code="BAD_OVERRIDE")
        return prefix + (parts[-1],)
    index = _field_index()
    if normalized not in index:
        raise ConfigurationError(f"Unknown override '{key}'", code="BAD_OVERRIDE")
    return index[normalized]


def parse_override_value(raw: str) -> Any:
    """Parse a command-line value as a TOML literal, falling back to the raw string."""
    try:
        return toml.loads(f"value = {raw}")["value"]
    except toml.TomlDecodeError:
        return raw

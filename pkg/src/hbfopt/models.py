"""Result and trace records with strict validation."""

from __future__ import annotations

import math
from enum import Enum
from typing import List, Optional

from pydantic import BaseModel, Field, field_validator, model_validator

FD_DOMINANCE_SLACK = 1e-9


class StepLabel(str, Enum):
    S1_PRECODER = "S1_precoder"
    S2_COMBINER = "S2_combiner"
    S3_WEIGHTS = "S3_weights"


class ExitReason(str, Enum):
    CONVERGED = "Converged"
    MAX_ITERATIONS = "MaxIterations"


class TraceStep(BaseModel):
    """Objective and rate after one step of one outer iteration."""

    label: StepLabel = Field(..., description="Which of the three steps")
    outer_index: int = Field(..., ge=0, description="Zero-based outer iteration")
    objective: float = Field(..., description="Objective J after the step")
    rate: float = Field(..., ge=0.0, description="Reported rate after the step, bits/s/Hz")

    model_config = {"extra": "forbid"}


class ConvergenceTrace(BaseModel):
    """Append-only record of one alternating-optimization run."""

    variant: str = Field(..., description="Variant label")
    initial_objective: float = Field(..., description="Objective of the initial state")
    steps: List[TraceStep] = Field(default_factory=list)
    outer_rates: List[float] = Field(default_factory=list, description="Rate sampled once per outer iteration")
    exit_reason: Optional[ExitReason] = Field(None, description="Why the run stopped")
    quantized_rate: Optional[float] = Field(None, description="Rate after exit quantization (WMMSE-MO-U)")
    degenerate: bool = Field(default=False, description="A singular combiner Gram matrix was regularized")
    rolled_back: bool = Field(default=False, description="The last outer iteration regressed and was undone")

    model_config = {"extra": "forbid"}

    @property
    def outer_iterations(self) -> int:
        return len(self.outer_rates)

    @property
    def objectives(self) -> List[float]:
        return [step.objective for step in self.steps]

    def objective_violations(self, slack: float = 1e-9) -> int:
        values = [self.initial_objective] + self.objectives
        return sum(1 for prev, cur in zip(values, values[1:]) if cur > prev + slack)

    def rate_violations(self, slack: float = 1e-9) -> int:
        return sum(1 for prev, cur in zip(self.outer_rates, self.outer_rates[1:]) if cur < prev - slack)


class ResultRow(BaseModel):
    """One (variant, snr, seed, bits) outcome of an experiment."""

    variant: str
    seed: int = Field(..., ge=0)
    snr_db: float
    quant_bits: Optional[int] = Field(None, ge=1, description="None means unquantized ('inf')")
    outer_iters: int = Field(..., ge=0)
    rate: float = Field(..., ge=0.0)
    fd_rate: float = Field(..., ge=0.0)
    wall_ms: float = Field(default=0.0, ge=0.0)
    flags: List[str] = Field(default_factory=list)

    model_config = {"extra": "forbid"}

    @field_validator("rate", "fd_rate")
    @classmethod
    def finite(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("rates must be finite")
        return value

    @model_validator(mode="after")
    def check_dominance(self) -> ResultRow:
        if self.fd_rate < self.rate - FD_DOMINANCE_SLACK:
            raise ValueError(
                f"fully-digital rate {self.fd_rate:.12g} below hybrid rate {self.rate:.12g}"
            )
        return self

    @property
    def quant_label(self) -> str:
        return "inf" if self.quant_bits is None else str(self.quant_bits)

    def sort_key(self) -> tuple:
        return (self.variant, self.snr_db, self.seed, self.quant_bits if self.quant_bits is not None else 1 << 30)

    def csv_fields(self) -> list[str]:
        return [
            self.variant,
            str(self.seed),
            repr(self.snr_db),
            self.quant_label,
            str(self.outer_iters),
            repr(self.rate),
            repr(self.fd_rate),
            repr(round(self.wall_ms, 3)),
            ";".join(self.flags),
        ]

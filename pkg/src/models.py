#!/usr/bin/env python3
"""
Pydantic models shared across the simulator, risk engine and reports.
"""

from enum import Enum
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.config import settings


class PerturbationStrategy(str, Enum):
    """The six controlled perturbation strategies."""
    CACHE_BYPASS = "cache_bypass"
    LATENCY_INJECTION = "latency_injection"
    RESOURCE_CONSTRAINT = "resource_constraint"
    BREAKER_BYPASS = "breaker_bypass"
    LB_MANIPULATION = "lb_manipulation"
    DEPENDENCY_ISOLATION = "dependency_isolation"


BINARY_STRATEGIES = frozenset({
    PerturbationStrategy.BREAKER_BYPASS,
    PerturbationStrategy.LB_MANIPULATION,
    PerturbationStrategy.DEPENDENCY_ISOLATION,
})


class RiskLevel(str, Enum):
    """Three-level latent risk classification."""
    LOW = "Low"
    MEDIUM = "Medium"
    HIGH = "High"

    @property
    def severity(self) -> int:
        return {"Low": 0, "Medium": 1, "High": 2}[self.value]


class PerturbationAction(BaseModel):
    """
    A controlled, reversible intervention on one component.

    Magnitude meaning per strategy:
    - cache_bypass: fraction of would-be hits routed downstream, in [0, 0.20]
    - latency_injection: added milliseconds, >= 0
    - resource_constraint: capacity multiplier in (0, 1]
    - breaker_bypass / lb_manipulation / dependency_isolation: ignored (binary)
    """
    model_config = ConfigDict(extra="forbid", frozen=True)

    strategy: PerturbationStrategy = Field(..., description="Perturbation strategy")
    target: str = Field(..., description="Target component id")
    magnitude: float = Field(1.0, description="Strategy-specific magnitude")
    started_tick: int = Field(0, ge=0, description="Tick the action was scheduled at")
    source: Optional[str] = Field(
        None,
        description="Predecessor whose edge into the target is isolated (dependency_isolation only)"
    )

    @model_validator(mode="after")
    def _check_magnitude(self) -> "PerturbationAction":
        strategy, m = self.strategy, self.magnitude
        if strategy == PerturbationStrategy.CACHE_BYPASS and not 0.0 <= m <= settings.BYPASS_CAP:
            raise ValueError(f"cache_bypass magnitude must be in [0, {settings.BYPASS_CAP}], got {m}")
        if strategy == PerturbationStrategy.LATENCY_INJECTION and m < 0.0:
            raise ValueError(f"latency_injection magnitude must be >= 0, got {m}")
        if strategy == PerturbationStrategy.RESOURCE_CONSTRAINT and not 0.0 < m <= 1.0:
            raise ValueError(f"resource_constraint magnitude must be in (0, 1], got {m}")
        if self.source is not None and strategy != PerturbationStrategy.DEPENDENCY_ISOLATION:
            raise ValueError("source is only meaningful for dependency_isolation")
        return self

    @property
    def key(self) -> tuple:
        """Identity of the effect; re-applying the same key replaces it."""
        return (self.strategy.value, self.target, self.source or "")


class ReportMetadata(BaseModel):
    """Provenance block embedded in every report."""
    model_config = ConfigDict(extra="forbid")

    command: str = Field(..., description="Subcommand that produced the report")
    scenario_hash: str = Field(..., description="SHA-256 of the canonical scenario document")
    seed: int = Field(..., description="Master seed")
    version: str = Field(settings.VERSION, description="Tool version")

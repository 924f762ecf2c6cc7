"""
Report models shared by every check and command.
Defines pydantic models for check verdicts and run statistics.
"""

from enum import Enum
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field


class CheckStatus(str, Enum):
    """Verdict of a numerical check."""
    PASSED = "passed"
    FAILED = "failed"
    VACUOUS = "vacuous"  # nothing to check (e.g. empty population)


class CheckReport(BaseModel):
    """Outcome of one property check with its error budgets."""

    name: str = Field(
        ...,
        description="Check identifier"
    )
    status: CheckStatus = Field(
        ...,
        description="Verdict"
    )
    values: Dict[str, Any] = Field(
        default_factory=dict,
        description="Estimated and reference quantities"
    )
    budgets: Dict[str, float] = Field(
        default_factory=dict,
        description="Error budgets the verdict was judged against"
    )
    notes: List[str] = Field(
        default_factory=list,
        description="Free-form remarks"
    )

    @property
    def passed(self) -> bool:
        return self.status != CheckStatus.FAILED

    @classmethod
    def verdict(
        cls,
        name: str,
        ok: bool,
        values: Optional[Dict[str, Any]] = None,
        budgets: Optional[Dict[str, float]] = None,
        notes: Optional[List[str]] = None,
    ) -> "CheckReport":
        return cls(
            name=name,
            status=CheckStatus.PASSED if ok else CheckStatus.FAILED,
            values=values or {},
            budgets=budgets or {},
            notes=notes or [],
        )


class SimulationStats(BaseModel):
    """Summary statistics for a simulation run."""

    replicas: int = Field(..., ge=1)
    steps: int = Field(..., ge=0)
    t0: float
    T: float
    dt: float
    seed: int
    initial_mean_count: float = 0.0
    terminal_mean_count: float = 0.0
    branch_events: int = 0
    death_events: int = 0
    max_population: int = 0

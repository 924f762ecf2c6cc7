"""
Auxiliary function of the comparison argument,

    theta(t, m) = e^{-L t} (<sqrt(1 + |x|^2), m> + m(R^d)^2),

and the mass cap its sub-level sets force.
"""

import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .cylinder import CylinderFunctional, aux_functional, lfd
from ..measures.models import AtomicMeasure
from ..storage.models import CheckReport, CheckStatus
from ..utils.errors import ConfigError
from ..utils.logger import setup_logger

logger = setup_logger(__name__)

SLACK = 1e-12


class AuxFunction(BaseModel):
    """theta with its exact linear functional derivative."""

    model_config = ConfigDict(frozen=True)

    L_coeff: float = Field(..., ge=0, description="Exponential discount L")

    def as_functional(self) -> CylinderFunctional:
        return aux_functional(self.L_coeff)

    def value(self, t: float, m: AtomicMeasure) -> float:
        bracket = float(np.sqrt(1.0 + np.sum(m.positions ** 2, axis=1)) @ m.weights) if m.n_atoms else 0.0
        return math.exp(-self.L_coeff * t) * (bracket + m.total_mass ** 2)

    def derivative(self, t: float, m: AtomicMeasure, x) -> np.ndarray:
        """e^{-L t} (sqrt(1 + |x|^2) + 2 m(R^d))."""
        return lfd(self.as_functional(), t, m, x)

    def in_sublevel(self, t: float, m: AtomicMeasure, c1: float, c2: float) -> bool:
        return self.value(t, m) <= c1 + c2 * m.total_mass


def _positive_root(a: float, b: float, c: float) -> float:
    """Largest root of a n^2 + b n + c with a > 0 and c <= 0, cancellation-free."""
    disc = math.sqrt(b * b - 4.0 * a * c)
    if b >= 0:
        return 0.0 if disc + b == 0 else -2.0 * c / (b + disc)
    return (-b + disc) / (2.0 * a)


def mass_cap(c1: float, c2: float, L_coeff: float, T: float) -> float:
    """
    Largest mass compatible with theta(t, m) <= c1 + c2 m(R^d) for some t <= T:
    the positive root of n^2 + (1 - e^{L T} c2) n - e^{L T} c1.
    """
    if c1 < 0 or c2 < 0:
        raise ConfigError("sub-level constants c1, c2 must be nonnegative")
    growth = math.exp(L_coeff * T)
    return _positive_root(1.0, 1.0 - growth * c2, -growth * c1)


def exclusion_threshold(t: float, c1: float, c2: float, L_coeff: float) -> float:
    """
    n* such that n delta_0 leaves the sub-level set at time t exactly when n > n*:
    the positive root of a n^2 + (a - c2) n - c1 with a = e^{-L t}.
    """
    if c1 < 0 or c2 < 0:
        raise ConfigError("sub-level constants c1, c2 must be nonnegative")
    a = math.exp(-L_coeff * t)
    return _positive_root(a, a - c2, -c1)


def aux_sublevel_check(
    samples: Sequence[Tuple[float, AtomicMeasure]],
    c1: float,
    c2: float,
    L_coeff: float,
    T: Optional[float] = None,
    radius: Optional[float] = None
) -> CheckReport:
    """
    Every sample in the sub-level set {theta <= c1 + c2 mass} must satisfy

        mass + mass^2 <= e^{L T} (c1 + c2 mass)   and   mass <= cap,

    and, when ``radius`` is given, m(|x| > R) <= e^{L T} (c1 + c2 cap) / R.
    """
    if not samples:
        return CheckReport(name="aux_sublevel", status=CheckStatus.VACUOUS, notes=["no samples"])
    horizon = T if T is not None else max(t for t, _ in samples)
    theta = AuxFunction(L_coeff=L_coeff)
    cap = mass_cap(c1, c2, L_coeff, horizon)
    growth = math.exp(L_coeff * horizon)
    tail_bound = growth * (c1 + c2 * cap) / radius if radius else None

    inside = 0
    violations: List[dict] = []
    for j, (t, m) in enumerate(samples):
        if t > horizon + SLACK:
            raise ConfigError(f"sample time {t} beyond the horizon {horizon}")
        if not theta.in_sublevel(t, m, c1, c2):
            continue
        inside += 1
        mass = m.total_mass
        quadratic_gap = mass + mass ** 2 - growth * (c1 + c2 * mass)
        scale = SLACK * max(1.0, growth * (c1 + c2 * mass))
        if quadratic_gap > scale or mass > cap * (1.0 + SLACK) + SLACK:
            violations.append({"sample": j, "t": t, "mass": mass, "kind": "mass"})
        if tail_bound is not None and m.n_atoms:
            outside = float(m.weights[np.linalg.norm(m.positions, axis=1) > radius].sum())
            if outside > tail_bound + SLACK:
                violations.append({"sample": j, "t": t, "tail": outside, "kind": "tail"})

    logger.debug(f"Aux check: {inside}/{len(samples)} samples in the sub-level set, cap {cap:.6g}")
    return CheckReport.verdict(
        "aux_sublevel",
        not violations,
        {
            "cap": cap,
            "samples": len(samples),
            "in_sublevel": inside,
            "violations": violations,
            "tail_bound": tail_bound,
        },
        {"slack": SLACK},
    )


def exclusion_check(t: float, c1: float, c2: float, L_coeff: float, tolerance: float = 1e-12) -> CheckReport:
    """theta(t, n* delta_0) equals c1 + c2 n* at the exclusion threshold."""
    n_star = exclusion_threshold(t, c1, c2, L_coeff)
    theta = AuxFunction(L_coeff=L_coeff)
    at_threshold = AtomicMeasure.dirac(np.zeros(1), n_star) if n_star > 0 else AtomicMeasure.zero(1)
    gap = theta.value(t, at_threshold) - (c1 + c2 * n_star)
    allowed = tolerance * max(1.0, c1 + c2 * n_star)
    return CheckReport.verdict(
        "aux_exclusion",
        abs(gap) <= allowed,
        {"threshold": n_star, "gap": gap},
        {"tolerance": allowed},
    )

"""
Closed-loop Lipschitz policies with box action sets.

Every family is a parametric map x -> a followed by the coordinatewise clamp
onto [a_lo, a_hi]; the clamp is 1-Lipschitz, so the certificate of the
unclamped map carries over.
"""

import itertools
import math
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..utils.errors import CertificationError, DimensionError
from ..utils.logger import setup_logger

logger = setup_logger(__name__)

TANH_CENTERS = (-1.0, 0.0, 1.0)
PROBE_TOLERANCE = 1e-6


class PolicyFamily(str, Enum):
    """Parametric policy families, nested: constant is affine_clamped with zero slope."""
    CONSTANT = "constant"
    AFFINE_CLAMPED = "affine_clamped"
    TANH_FEATURES = "tanh_features"


def n_parameters(family: PolicyFamily, state_dim: int, action_dim: int) -> int:
    family = PolicyFamily(family)
    if family == PolicyFamily.CONSTANT:
        return action_dim
    if family == PolicyFamily.AFFINE_CLAMPED:
        return action_dim * (1 + state_dim)
    return action_dim * (1 + len(TANH_CENTERS) * state_dim)


class Policy(BaseModel):
    """Feedback alpha(t, x) with certified Lipschitz and growth constants."""

    model_config = ConfigDict(frozen=True)

    family: PolicyFamily = Field(default=PolicyFamily.CONSTANT)
    state_dim: int = Field(default=1, ge=1)
    action_dim: int = Field(default=1, ge=1)
    parameters: Tuple[float, ...] = Field(default=(0.0,), description="Flat parameter vector")
    action_low: Tuple[float, ...] = Field(default=(-1.0,), description="Lower corner of the box A")
    action_high: Tuple[float, ...] = Field(default=(1.0,), description="Upper corner of the box A")

    @model_validator(mode="before")
    @classmethod
    def broadcast_box(cls, data):
        if isinstance(data, dict):
            data = dict(data)
            n = int(data.get("action_dim", 1))
            for key in ("action_low", "action_high"):
                value = data.get(key)
                if isinstance(value, (int, float)):
                    data[key] = (float(value),) * n
                elif value is not None and len(value) == 1 and n > 1:
                    data[key] = tuple(value) * n
        return data

    @model_validator(mode="after")
    def check_shapes(self) -> "Policy":
        expected = n_parameters(self.family, self.state_dim, self.action_dim)
        if len(self.parameters) != expected:
            raise ValueError(
                f"{self.family.value} policy needs {expected} parameters, got {len(self.parameters)}"
            )
        if len(self.action_low) != self.action_dim or len(self.action_high) != self.action_dim:
            raise ValueError("action box corners must have action_dim entries")
        if any(lo > hi for lo, hi in zip(self.action_low, self.action_high)):
            raise ValueError("action box is empty")
        if not all(math.isfinite(v) for v in self.parameters):
            raise ValueError("policy parameters must be finite")
        return self

    # ------------------------------------------------------------------
    # Parameter layout

    def _split(self) -> Tuple[np.ndarray, Optional[np.ndarray]]:
        theta = np.asarray(self.parameters, dtype=float)
        n = self.action_dim
        offset = theta[:n]
        if self.family == PolicyFamily.CONSTANT:
            return offset, None
        return offset, theta[n:].reshape(n, -1)

    def _features(self, x: np.ndarray) -> np.ndarray:
        if self.family == PolicyFamily.AFFINE_CLAMPED:
            return x
        return np.concatenate([np.tanh(x - c) for c in TANH_CENTERS], axis=1)

    # ------------------------------------------------------------------
    # Evaluation

    def act(self, t: float, x: np.ndarray) -> np.ndarray:
        """Actions at positions x (N, d) -> (N, n), always inside A."""
        x = np.asarray(x, dtype=float)
        if x.ndim != 2 or x.shape[1] != self.state_dim:
            raise DimensionError(f"dimension: policy for d={self.state_dim} evaluated on shape {x.shape}")
        offset, weights = self._split()
        raw = np.broadcast_to(offset, (x.shape[0], self.action_dim))
        if weights is not None:
            raw = raw + self._features(x) @ weights.T
        return np.clip(raw, self.action_low, self.action_high)

    @property
    def lipschitz(self) -> float:
        """Certified Lipschitz constant in x."""
        _, weights = self._split()
        if weights is None:
            return 0.0
        if self.family == PolicyFamily.AFFINE_CLAMPED:
            return float(np.linalg.norm(weights, 2))
        # each tanh feature block is 1-Lipschitz per coordinate, three blocks stacked
        return float(math.sqrt(len(TANH_CENTERS)) * np.linalg.norm(weights, 2))

    @property
    def growth(self) -> float:
        """G with |alpha(x)| <= G (1 + |x|); the clamp makes alpha bounded by the box corner."""
        corner = np.maximum(np.abs(self.action_low), np.abs(self.action_high))
        return float(np.linalg.norm(corner))

    @property
    def action_bound(self) -> float:
        return self.growth

    def with_parameters(self, theta: Sequence[float]) -> "Policy":
        return Policy(**{**self.model_dump(), "parameters": tuple(float(v) for v in theta)})

    def probe_lipschitz(self, n_pairs: int = 256, seed: int = 0, scale: float = 3.0) -> float:
        """Largest finite-difference ratio |alpha(x) - alpha(y)| / |x - y| over random pairs."""
        rng = np.random.default_rng(seed)
        x = rng.uniform(-scale, scale, size=(n_pairs, self.state_dim))
        y = x + rng.normal(scale=0.1 * scale, size=x.shape)
        gaps = np.linalg.norm(x - y, axis=1)
        keep = gaps > 0
        ratios = np.linalg.norm(self.act(0.0, x) - self.act(0.0, y), axis=1)[keep] / gaps[keep]
        return float(ratios.max()) if ratios.size else 0.0

    def certify(self, n_pairs: int = 256, seed: int = 0) -> float:
        """Run the probe and raise if it exceeds the certificate."""
        probed = self.probe_lipschitz(n_pairs=n_pairs, seed=seed)
        if probed > self.lipschitz * (1.0 + PROBE_TOLERANCE) + 1e-12:
            raise CertificationError(
                f"policy probe ratio {probed:.6g} exceeds certified L={self.lipschitz:.6g}"
            )
        return probed

    def action_grid(self, points_per_axis: int) -> np.ndarray:
        """Constant actions on a regular grid of A, shape (points^n, n)."""
        if points_per_axis < 1:
            raise ValueError("action grid needs at least one point per axis")
        axes = [np.linspace(lo, hi, points_per_axis) for lo, hi in zip(self.action_low, self.action_high)]
        return np.array(list(itertools.product(*axes)), dtype=float)

    def parameter_box(self) -> Tuple[np.ndarray, np.ndarray]:
        """Range random optimizer restarts draw from: offsets in A, slopes in [-1, 1]."""
        n_total = len(self.parameters)
        low = -np.ones(n_total)
        high = np.ones(n_total)
        low[:self.action_dim] = self.action_low
        high[:self.action_dim] = self.action_high
        return low, high

    def describe(self) -> Dict[str, object]:
        return {
            "family": self.family.value,
            "state_dim": self.state_dim,
            "action_dim": self.action_dim,
            "parameters": list(self.parameters),
            "action_low": list(self.action_low),
            "action_high": list(self.action_high),
            "lipschitz": self.lipschitz,
            "growth": self.growth,
        }


def zero_policy(
    family: PolicyFamily = PolicyFamily.CONSTANT,
    state_dim: int = 1,
    action_dim: int = 1,
    action_low: Sequence[float] = (-1.0,),
    action_high: Sequence[float] = (1.0,)
) -> Policy:
    """Policy of the family with every parameter zero (inside A when 0 is)."""
    family = PolicyFamily(family)
    return Policy(
        family=family,
        state_dim=state_dim,
        action_dim=action_dim,
        parameters=(0.0,) * n_parameters(family, state_dim, action_dim),
        action_low=tuple(action_low),
        action_high=tuple(action_high),
    )


def embed_parameters(policy: Policy, family: PolicyFamily) -> Policy:
    """Same feedback written in a larger family (constant -> affine_clamped -> tanh_features)."""
    family = PolicyFamily(family)
    offset, weights = policy._split()
    n, d = policy.action_dim, policy.state_dim
    size = n_parameters(family, d, n) - n
    slopes = np.zeros(size)
    if weights is not None:
        if family != policy.family:
            raise ValueError(f"cannot embed {policy.family.value} into {family.value}")
        slopes = weights.reshape(-1)
    theta: List[float] = list(offset) + list(slopes)
    return Policy(**{**policy.model_dump(), "family": family, "parameters": tuple(theta)})

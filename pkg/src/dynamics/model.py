"""
Coefficient bundles (b, sigma, gamma, p) of the controlled branching dynamics.

Coefficients are vectorized over particles: each callable receives the time,
an (N, d) array of positions, the interaction measure and an (N, n) array of
actions. Declared bounds are asserted at every evaluation.
"""

from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Tuple, Type, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from ..measures.models import AtomicMeasure
from ..utils.config import settings
from ..utils.errors import ConfigError, DimensionError, ModelBoundError, ToolkitError
from ..utils.logger import setup_logger

logger = setup_logger(__name__)

# (t, X (N, d), m, A (N, n)) -> array
Coefficient = Callable[[float, np.ndarray, AtomicMeasure, np.ndarray], np.ndarray]

PMF_TOLERANCE = 1e-12
BOUND_SLACK = 1e-12


class Assumption(str, Enum):
    """Structural properties a coefficient family satisfies."""
    BOUNDED = "bounded"
    LINEAR_GROWTH = "linear_growth"
    LIPSCHITZ = "lipschitz"
    MEAN_FIELD = "mean_field"


class ModelSpec(BaseModel):
    """Coefficient bundle with its declared constants."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    name: str = Field(default="custom", description="Model identifier")
    family: str = Field(default="custom", description="Registry family the model was built from")
    dim: int = Field(..., ge=1, description="Space dimension d")
    action_dim: int = Field(default=1, ge=1, description="Action dimension n")
    drift: Coefficient = Field(..., description="b -> (N, d)")
    diffusion: Coefficient = Field(..., description="sigma -> (N, d, d)")
    rate: Coefficient = Field(..., description="gamma -> (N,), values in [0, gamma_bar]")
    offspring: Coefficient = Field(..., description="(p_l) -> (N, L + 1), rows sum to 1")
    gamma_bar: float = Field(..., gt=0, description="Dominating branching rate")
    M1: float = Field(..., ge=0, description="Bound on sum l p_l")
    M2: float = Field(..., ge=0, description="Bound on sum l^2 p_l")
    max_offspring: int = Field(default=2, ge=0, description="Largest offspring count with positive mass")
    lipschitz: Dict[str, float] = Field(
        default_factory=dict,
        description="Declared Lipschitz constants of b, sigma, gamma, p"
    )
    drift_bound: Optional[float] = Field(
        default=None,
        ge=0,
        description="sup |b| without the control term; None for linear-growth drifts"
    )
    drift_growth: Optional[Tuple[float, float]] = Field(
        default=None,
        description="(b0, b1) with |b| <= b0 + b1 |x| without the control term; None when undeclared"
    )
    action_gain: float = Field(default=0.0, ge=0, description="Operator bound of the action's effect on b")
    diffusion_bound: Optional[float] = Field(
        default=None,
        ge=0,
        description="sup of the Frobenius norm of sigma"
    )
    assumptions: Tuple[Assumption, ...] = Field(default=())
    sobolev: Dict[str, str] = Field(
        default_factory=dict,
        description="Declared Sobolev memberships (metadata only)"
    )

    @model_validator(mode="after")
    def check_offspring_cap(self) -> "ModelSpec":
        if self.max_offspring > settings.offspring_cap:
            raise ValueError(
                f"offspring support up to {self.max_offspring} exceeds the cap {settings.offspring_cap}"
            )
        return self

    # ------------------------------------------------------------------
    # Checked evaluation

    def eval_drift(self, t: float, x: np.ndarray, m: AtomicMeasure, a: np.ndarray) -> np.ndarray:
        out = np.asarray(self.drift(t, x, m, a), dtype=float)
        if out.shape != x.shape:
            raise DimensionError(f"dimension: drift returned shape {out.shape}, expected {x.shape}")
        return out

    def eval_diffusion(self, t: float, x: np.ndarray, m: AtomicMeasure, a: np.ndarray) -> np.ndarray:
        out = np.asarray(self.diffusion(t, x, m, a), dtype=float)
        expected = (x.shape[0], self.dim, self.dim)
        if out.shape != expected:
            raise DimensionError(f"dimension: diffusion returned shape {out.shape}, expected {expected}")
        return out

    def eval_rate(self, t: float, x: np.ndarray, m: AtomicMeasure, a: np.ndarray) -> np.ndarray:
        out = np.asarray(self.rate(t, x, m, a), dtype=float).reshape(-1)
        if out.size and (out.min() < -BOUND_SLACK or out.max() > self.gamma_bar + BOUND_SLACK):
            raise ModelBoundError(
                f"rate {float(out.min()):.6g}..{float(out.max()):.6g} outside [0, {self.gamma_bar}] at t={t}"
            )
        return np.clip(out, 0.0, self.gamma_bar)

    def eval_offspring(self, t: float, x: np.ndarray, m: AtomicMeasure, a: np.ndarray) -> np.ndarray:
        out = np.asarray(self.offspring(t, x, m, a), dtype=float)
        if out.ndim != 2 or out.shape[0] != x.shape[0]:
            raise DimensionError(f"dimension: offspring pmf of shape {out.shape} for {x.shape[0]} particles")
        if out.shape[1] - 1 > self.max_offspring:
            tail = out[:, self.max_offspring + 1:]
            if np.any(tail > 0):
                raise ModelBoundError(f"offspring pmf has mass beyond l={self.max_offspring}")
        if out.size == 0:
            return out
        if out.min() < -PMF_TOLERANCE:
            raise ModelBoundError(f"offspring pmf has negative entry {float(out.min()):.3g}")
        if np.max(np.abs(out.sum(axis=1) - 1.0)) > PMF_TOLERANCE:
            raise ModelBoundError("offspring pmf does not sum to 1")
        levels = np.arange(out.shape[1], dtype=float)
        first = out @ levels
        second = out @ levels ** 2
        if first.max() > self.M1 + BOUND_SLACK:
            raise ModelBoundError(f"sum l p_l = {float(first.max()):.6g} exceeds M1 = {self.M1}")
        if second.max() > self.M2 + BOUND_SLACK:
            raise ModelBoundError(f"sum l^2 p_l = {float(second.max()):.6g} exceeds M2 = {self.M2}")
        return np.clip(out, 0.0, None)

    def branching_mean(self, t: float, x: np.ndarray, m: AtomicMeasure, a: np.ndarray) -> np.ndarray:
        """gamma * sum (l - 1) p_l at every particle."""
        gamma = self.eval_rate(t, x, m, a)
        pmf = self.eval_offspring(t, x, m, a)
        levels = np.arange(pmf.shape[1], dtype=float) - 1.0
        return gamma * (pmf @ levels)

    def coefficient_bounds(self, action_bound: float) -> Dict[str, Optional[float]]:
        """sup |b| (with actions of norm <= action_bound), sup |sigma|_F, gamma_bar, M1."""
        b = None if self.drift_bound is None else self.drift_bound + self.action_gain * action_bound
        return {"b": b, "sigma": self.diffusion_bound, "gamma_bar": self.gamma_bar, "M1": self.M1}

    def drift_envelope(self, action_bound: float) -> Optional[Tuple[float, float]]:
        """(b0, b1) with |b(t, x, m, a)| <= b0 + b1 |x| for |a| <= action_bound, when declared."""
        if self.drift_growth is not None:
            b0, b1 = self.drift_growth
        elif self.drift_bound is not None:
            b0, b1 = self.drift_bound, 0.0
        else:
            return None
        return b0 + self.action_gain * action_bound, b1

    def has(self, assumption: Assumption) -> bool:
        return assumption in self.assumptions


# ----------------------------------------------------------------------
# Registry of built-in families

class ModelParams(BaseModel):
    """Keys shared by every family: drift offset, action gain, isotropic noise, constant branching."""

    model_config = ConfigDict(extra="forbid")

    name: Optional[str] = None
    dim: int = Field(default=1, ge=1)
    action_dim: Optional[int] = Field(default=None, ge=1)
    beta: List[float] = Field(default_factory=lambda: [0.0], description="Constant drift (scalar broadcasts)")
    action_gain: float = Field(default=0.0, description="b += action_gain * a")
    sigma: float = Field(default=0.0, description="sigma = sigma * I")
    gamma: float = Field(default=0.0, ge=0, description="Branching rate")
    gamma_bar: Optional[float] = Field(default=None, gt=0)
    pmf: List[float] = Field(default_factory=lambda: [0.0, 1.0], description="p_0, p_1, ...")

    @field_validator("beta", mode="before")
    @classmethod
    def listify(cls, v: Any) -> Any:
        if isinstance(v, (int, float)):
            return [float(v)]
        return v

    @model_validator(mode="after")
    def check_shapes(self) -> "ModelParams":
        if len(self.beta) not in (1, self.dim):
            raise ValueError(f"beta has {len(self.beta)} entries for dim={self.dim}")
        if any(p < 0 for p in self.pmf) or abs(sum(self.pmf) - 1.0) > PMF_TOLERANCE:
            raise ValueError("pmf must be nonnegative and sum to 1")
        if len(self.pmf) - 1 > settings.offspring_cap:
            raise ValueError(f"pmf support exceeds the cap {settings.offspring_cap}")
        n = self.action_dim or self.dim
        if self.action_gain != 0 and n not in (1, self.dim):
            raise ValueError(f"action_dim={n} cannot drive a drift of dim={self.dim}")
        return self

    def resolved_gamma_bar(self) -> float:
        if self.gamma_bar is not None:
            if self.gamma > self.gamma_bar:
                raise ValueError(f"gamma={self.gamma} exceeds gamma_bar={self.gamma_bar}")
            return self.gamma_bar
        return self.gamma if self.gamma > 0 else 1.0


class AffineParams(ModelParams):
    kappa: float = Field(default=0.0, description="b += kappa * x")


class MassCoupledParams(AffineParams):
    mass_drift: float = Field(default=0.0, description="b += mass_drift * m(R^d)")
    mean_drift: float = Field(default=0.0, description="b += mean_drift * <m, x>")
    rate_mass: float = Field(default=0.0, description="gamma += rate_mass * m(R^d), clipped to [0, gamma_bar]")


class SaturatingParams(ModelParams):
    kappa: float = Field(default=1.0, description="b += kappa * tanh(x / scale)")
    scale: float = Field(default=1.0, gt=0)


def _constant_pieces(p: ModelParams):
    d = p.dim
    beta = np.broadcast_to(np.asarray(p.beta, dtype=float), (d,)).copy()
    pmf = np.asarray(p.pmf, dtype=float)
    gain = p.action_gain
    sigma = p.sigma

    def control_term(a: np.ndarray, n_particles: int) -> np.ndarray:
        if gain == 0:
            return np.zeros((n_particles, d))
        return gain * np.broadcast_to(a, (n_particles, d)) if a.shape[1] == 1 else gain * a

    def diffusion(t, x, m, a):
        return np.broadcast_to(sigma * np.eye(d), (x.shape[0], d, d))

    def offspring(t, x, m, a):
        return np.broadcast_to(pmf, (x.shape[0], pmf.size))

    return beta, pmf, control_term, diffusion, offspring


def _declared(p: ModelParams, pmf: np.ndarray) -> Dict[str, Any]:
    levels = np.arange(pmf.size, dtype=float)
    support = np.nonzero(pmf)[0]
    return {
        "dim": p.dim,
        "action_dim": p.action_dim or p.dim,
        "gamma_bar": p.resolved_gamma_bar(),
        "M1": float(pmf @ levels),
        "M2": float(pmf @ levels ** 2),
        "max_offspring": int(support.max()) if support.size else 0,
        "action_gain": abs(p.action_gain),
        "diffusion_bound": abs(p.sigma) * np.sqrt(p.dim),
    }


def _constant_rate(p: ModelParams):
    gamma = p.gamma

    def rate(t, x, m, a):
        return np.full(x.shape[0], gamma)

    return rate


def build_constant(p: ModelParams) -> ModelSpec:
    """b = beta + gain a, sigma constant, gamma constant."""
    beta, pmf, control_term, diffusion, offspring = _constant_pieces(p)

    def drift(t, x, m, a):
        return beta[None, :] + control_term(a, x.shape[0])

    return ModelSpec(
        name=p.name or "constant",
        family="constant",
        drift=drift,
        diffusion=diffusion,
        rate=_constant_rate(p),
        offspring=offspring,
        drift_bound=float(np.linalg.norm(beta)),
        lipschitz={"b": 0.0, "sigma": 0.0, "gamma": 0.0, "p": 0.0},
        assumptions=(Assumption.BOUNDED, Assumption.LIPSCHITZ),
        sobolev={"b": "declared", "sigma": "declared", "gamma": "declared", "p": "declared"},
        **_declared(p, pmf),
    )


def build_affine(p: AffineParams) -> ModelSpec:
    """b = beta + kappa x + gain a (Ornstein-Uhlenbeck for kappa < 0)."""
    beta, pmf, control_term, diffusion, offspring = _constant_pieces(p)
    kappa = p.kappa

    def drift(t, x, m, a):
        return beta[None, :] + kappa * x + control_term(a, x.shape[0])

    bounded = kappa == 0
    return ModelSpec(
        name=p.name or "affine",
        family="affine",
        drift=drift,
        diffusion=diffusion,
        rate=_constant_rate(p),
        offspring=offspring,
        drift_bound=float(np.linalg.norm(beta)) if bounded else None,
        drift_growth=(float(np.linalg.norm(beta)), abs(kappa)),
        lipschitz={"b": abs(kappa), "sigma": 0.0, "gamma": 0.0, "p": 0.0},
        assumptions=(Assumption.BOUNDED if bounded else Assumption.LINEAR_GROWTH, Assumption.LIPSCHITZ),
        sobolev={} if not bounded else {"b": "declared"},
        **_declared(p, pmf),
    )


def build_mass_coupled(p: MassCoupledParams) -> ModelSpec:
    """Affine drift plus dependence on m through m(R^d) and <m, x> only."""
    beta, pmf, control_term, diffusion, offspring = _constant_pieces(p)
    kappa, mass_drift, mean_drift = p.kappa, p.mass_drift, p.mean_drift
    gamma, rate_mass = p.gamma, p.rate_mass
    declared = _declared(p, pmf)
    if rate_mass != 0 and p.gamma_bar is None:
        raise ConfigError("mass_coupled with rate_mass needs an explicit gamma_bar")
    gamma_bar = declared["gamma_bar"]

    def drift(t, x, m, a):
        shift = mass_drift * m.total_mass + mean_drift * m.first_moment
        return beta[None, :] + kappa * x + shift[None, :] + control_term(a, x.shape[0])

    def rate(t, x, m, a):
        return np.full(x.shape[0], float(np.clip(gamma + rate_mass * m.total_mass, 0.0, gamma_bar)))

    return ModelSpec(
        name=p.name or "mass_coupled",
        family="mass_coupled",
        drift=drift,
        diffusion=diffusion,
        rate=rate,
        offspring=offspring,
        drift_bound=None,
        lipschitz={"b": abs(kappa), "sigma": 0.0, "gamma": abs(rate_mass), "p": 0.0},
        assumptions=(Assumption.LINEAR_GROWTH, Assumption.LIPSCHITZ, Assumption.MEAN_FIELD),
        **declared,
    )


def build_saturating(p: SaturatingParams) -> ModelSpec:
    """Bounded drift b = beta + kappa tanh(x / scale) + gain a."""
    beta, pmf, control_term, diffusion, offspring = _constant_pieces(p)
    kappa, scale = p.kappa, p.scale

    def drift(t, x, m, a):
        return beta[None, :] + kappa * np.tanh(x / scale) + control_term(a, x.shape[0])

    return ModelSpec(
        name=p.name or "saturating",
        family="saturating",
        drift=drift,
        diffusion=diffusion,
        rate=_constant_rate(p),
        offspring=offspring,
        drift_bound=float(np.linalg.norm(beta) + abs(kappa) * np.sqrt(p.dim)),
        lipschitz={"b": abs(kappa) / scale, "sigma": 0.0, "gamma": 0.0, "p": 0.0},
        assumptions=(Assumption.BOUNDED, Assumption.LIPSCHITZ),
        sobolev={"b": "declared", "sigma": "declared", "gamma": "declared", "p": "declared"},
        **_declared(p, pmf),
    )


MODEL_FAMILIES: Dict[str, Tuple[Type[ModelParams], Callable[[Any], ModelSpec]]] = {
    "constant": (ModelParams, build_constant),
    "affine": (AffineParams, build_affine),
    "mass_coupled": (MassCoupledParams, build_mass_coupled),
    "saturating": (SaturatingParams, build_saturating),
}


def build_model(family: str, params: Union[Dict[str, Any], ModelParams, None] = None) -> ModelSpec:
    """
    Build a registered model family.

    Args:
        family: One of ``MODEL_FAMILIES``
        params: Family keys (validated, unknown keys rejected)

    Returns:
        ModelSpec with declared constants derived from the parameters

    Raises:
        ConfigError: on an unknown family or invalid parameters
    """
    if family not in MODEL_FAMILIES:
        raise ConfigError(f"unknown model family '{family}' (known: {', '.join(sorted(MODEL_FAMILIES))})")
    schema, builder = MODEL_FAMILIES[family]
    try:
        if not isinstance(params, ModelParams):
            params = schema(**(params or {}))
        model = builder(params)
    except ToolkitError:
        raise
    except ValidationError as exc:
        raise ConfigError(f"model family '{family}': " + "; ".join(e["msg"] for e in exc.errors())) from exc
    except ValueError as exc:
        raise ConfigError(f"model family '{family}': {exc}") from exc
    logger.debug(f"Built model '{model.name}' ({family}), gamma_bar={model.gamma_bar}, M1={model.M1}")
    return model

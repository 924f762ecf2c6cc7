"""
Truncated Wasserstein distance with cemetery padding.

Both measures are padded with mass at a cemetery point to a common total
mass and transported under rho(x, y) = |x - y| ^ 1, rho(x, cemetery) =
rho(x, x0) + 1. The transport problem is solved exactly as a linear program
(HiGHS) on the atoms.
"""

from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.optimize import linprog
from scipy.sparse import csc_matrix

from ..measures.models import AtomicMeasure
from ..measures.operations import integrate
from ..utils.errors import CertificationError, DimensionError, NumericalError
from ..utils.logger import setup_logger

logger = setup_logger(__name__)

LIPSCHITZ_SLACK = 1e-12


class TransportResult(BaseModel):
    """Optimal transport value and plan on the padded atom instance."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    value: float = Field(..., ge=0)
    plan: np.ndarray = Field(..., description="Coupling, rows: m1 atoms + cemetery, cols: m2 atoms + cemetery")
    padded_mass: float = Field(..., ge=0)
    base_point: Tuple[float, ...]


class TrialFunction(BaseModel):
    """Test function for the dual bound, with its Lipschitz certificate."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    name: str = "trial"
    func: Callable[[np.ndarray], np.ndarray] = Field(
        ...,
        description="Vectorized field (n, d) -> (n,)"
    )
    lipschitz: float = Field(
        ...,
        ge=0,
        description="Certified Lipschitz constant w.r.t. |x - y| ^ 1"
    )
    vanishing_point: Tuple[float, ...] = Field(
        ...,
        description="Point where func vanishes"
    )


class DualBound(BaseModel):
    """Dual lower bound for the truncated Wasserstein distance."""

    value: float = Field(..., ge=0)
    mass_gap: float = Field(..., ge=0)
    best_trial: Optional[str] = None


def truncated_cost(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Pairwise |x - y| ^ 1 for (n, d) and (k, d) arrays."""
    return np.minimum(np.linalg.norm(x[:, None, :] - y[None, :, :], axis=2), 1.0)


def _resolve_base_point(dim: int, base_point: Optional[Sequence[float]]) -> np.ndarray:
    if base_point is None:
        return np.zeros(dim)
    point = np.atleast_1d(np.asarray(base_point, dtype=float))
    if point.size != dim:
        raise DimensionError(f"dimension: base point of size {point.size} for d={dim}")
    return point


def solve_transport(a: np.ndarray, b: np.ndarray, cost: np.ndarray) -> Tuple[float, np.ndarray]:
    """
    Balanced transport LP: min <cost, P> s.t. P 1 = a, P^T 1 = b, P >= 0.

    Args:
        a: Row marginal (n,)
        b: Column marginal (k,), same total as ``a``
        cost: Cost matrix (n, k)

    Returns:
        (optimal value, optimal plan)
    """
    n, k = cost.shape
    if n == 0 or k == 0:
        return 0.0, np.zeros((n, k))
    rows = np.concatenate([np.repeat(np.arange(n), k), n + np.tile(np.arange(k), n)])
    cols = np.concatenate([np.arange(n * k), np.arange(n * k)])
    A_eq = csc_matrix((np.ones(2 * n * k), (rows, cols)), shape=(n + k, n * k))
    b_eq = np.concatenate([a, b])
    res = linprog(cost.reshape(-1), A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if res.status != 0:
        raise NumericalError(f"transport LP failed: {res.message}")
    plan = res.x.reshape(n, k)
    return float(cost.reshape(-1) @ res.x), plan


def truncated_w1(
    m1: AtomicMeasure,
    m2: AtomicMeasure,
    base_point: Optional[Sequence[float]] = None,
    padding: float = 0.0
) -> TransportResult:
    """
    Extended Wasserstein-1 distance with truncated ground cost.

    Args:
        m1: First measure
        m2: Second measure
        base_point: x0 defining rho(x, cemetery) (defaults to the origin)
        padding: Extra mass added on top of max(m1(R^d), m2(R^d)); the value
            does not depend on it

    Returns:
        TransportResult with the optimal value and plan
    """
    if m1.dim != m2.dim:
        raise DimensionError(f"dimension: measures of dimension {m1.dim} and {m2.dim}")
    if padding < 0:
        raise ValueError("padding must be nonnegative")
    x0 = _resolve_base_point(m1.dim, base_point)
    a_m, b_m = m1.merged(), m2.merged()
    level = max(a_m.total_mass, b_m.total_mass) + padding

    cost = np.zeros((a_m.n_atoms + 1, b_m.n_atoms + 1))
    cost[:-1, :-1] = truncated_cost(a_m.positions, b_m.positions)
    cost[:-1, -1] = truncated_cost(a_m.positions, x0[None, :])[:, 0] + 1.0
    cost[-1, :-1] = truncated_cost(x0[None, :], b_m.positions)[0, :] + 1.0

    a = np.append(a_m.weights, level - a_m.total_mass)
    b = np.append(b_m.weights, level - b_m.total_mass)
    if level == 0:
        return TransportResult(value=0.0, plan=np.zeros_like(cost), padded_mass=0.0, base_point=tuple(x0))
    value, plan = solve_transport(a, b, cost)
    return TransportResult(value=max(value, 0.0), plan=plan, padded_mass=level, base_point=tuple(x0))


def normalized_w1(m1: AtomicMeasure, m2: AtomicMeasure) -> TransportResult:
    """Wasserstein-1 between the normalized probability measures, truncated cost, no cemetery."""
    if m1.dim != m2.dim:
        raise DimensionError(f"dimension: measures of dimension {m1.dim} and {m2.dim}")
    a_m, b_m = m1.merged(), m2.merged()
    if a_m.total_mass == 0 or b_m.total_mass == 0:
        raise ValueError("normalized_w1 needs two measures of positive mass")
    a = a_m.weights / a_m.total_mass
    b = b_m.weights / b_m.total_mass
    value, plan = solve_transport(a, b, truncated_cost(a_m.positions, b_m.positions))
    return TransportResult(value=max(value, 0.0), plan=plan, padded_mass=1.0, base_point=())


def certify_trial(trial: TrialFunction, probe_points: np.ndarray) -> None:
    """
    Reject trials whose certificate exceeds 1, that do not vanish at their
    declared point, or that violate the certificate on the probe points.
    """
    if trial.lipschitz > 1.0:
        raise CertificationError(f"trial '{trial.name}' certifies L={trial.lipschitz} > 1")
    zero = np.asarray(trial.vanishing_point, dtype=float).reshape(1, -1)
    if zero.shape[1] != probe_points.shape[1]:
        raise DimensionError(f"dimension: trial '{trial.name}' vanishing point has wrong size")
    if abs(float(np.asarray(trial.func(zero)).reshape(-1)[0])) > LIPSCHITZ_SLACK:
        raise CertificationError(f"trial '{trial.name}' does not vanish at its declared point")
    points = np.vstack([probe_points, zero])
    values = np.asarray(trial.func(points), dtype=float).reshape(-1)
    gaps = np.abs(values[:, None] - values[None, :])
    allowed = trial.lipschitz * truncated_cost(points, points) + LIPSCHITZ_SLACK
    if np.any(gaps > allowed):
        raise CertificationError(f"trial '{trial.name}' violates its Lipschitz certificate")


def w1_dual_lower_bound(
    m1: AtomicMeasure,
    m2: AtomicMeasure,
    trial_functions: List[TrialFunction],
    base_point: Optional[Sequence[float]] = None
) -> DualBound:
    """
    Dual lower bound max_phi |<m1 - m2, phi>| + |m1(R^d) - m2(R^d)|.

    Each trial is re-centred at the base point (phi - phi(x0)), which keeps
    it 1-Lipschitz and makes it an admissible dual potential together with
    the value +-1 at the cemetery.
    """
    if m1.dim != m2.dim:
        raise DimensionError(f"dimension: measures of dimension {m1.dim} and {m2.dim}")
    x0 = _resolve_base_point(m1.dim, base_point)
    probe = np.vstack([m1.positions, m2.positions, x0[None, :]])
    mass_gap = abs(m1.total_mass - m2.total_mass)

    best, best_name = 0.0, None
    for trial in trial_functions:
        certify_trial(trial, probe)
        offset = float(np.asarray(trial.func(x0[None, :])).reshape(-1)[0])

        def centred(x, f=trial.func, c=offset):
            return np.asarray(f(x), dtype=float).reshape(-1) - c

        gap = abs(integrate(m1, centred) - integrate(m2, centred))
        if best_name is None or gap > best:
            best, best_name = gap, trial.name
    return DualBound(value=best + mass_gap, mass_gap=mass_gap, best_trial=best_name)


def distance_trial(center: Sequence[float], name: Optional[str] = None) -> TrialFunction:
    """phi(x) = |x - center| ^ 1, certified 1-Lipschitz, vanishing at ``center``."""
    c = np.atleast_1d(np.asarray(center, dtype=float))

    def func(x: np.ndarray) -> np.ndarray:
        return np.minimum(np.linalg.norm(np.asarray(x, dtype=float) - c[None, :], axis=1), 1.0)

    return TrialFunction(
        name=name or f"dist[{','.join(f'{v:g}' for v in c)}]",
        func=func,
        lipschitz=1.0,
        vanishing_point=tuple(c),
    )

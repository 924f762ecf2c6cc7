"""
Operations on atomic measures and configurations.
Integration, spatial marginals and the configuration metric d_E.
"""

from typing import Callable

import numpy as np

from .models import AtomicMeasure, Configuration, Label
from ..utils.errors import DimensionError

# Scalar field on R^d: maps an (n, d) array of points to an (n,) array of values.
ScalarField = Callable[[np.ndarray], np.ndarray]


def integrate(m: AtomicMeasure, phi: ScalarField) -> float:
    """
    Integrate a scalar field against an atomic measure.

    Args:
        m: Atomic measure
        phi: Vectorized field, (n, d) -> (n,)

    Returns:
        sum_i w_i phi(x_i)
    """
    if m.n_atoms == 0:
        return 0.0
    values = np.asarray(phi(m.positions), dtype=float).reshape(-1)
    return float(m.weights @ values)


def config_to_measure(e: Configuration) -> AtomicMeasure:
    """Spatial marginal of a configuration: one unit atom per particle."""
    positions = e.position_array()
    return AtomicMeasure(positions=positions, weights=np.ones(positions.shape[0]), dim=e.dim)


def configuration_sum(e: Configuration, f: Callable[[Label, np.ndarray], float]) -> float:
    """<e, f> = sum over particles of f^k(x^k) for a label-dependent function."""
    return float(sum(f(label, np.asarray(x)) for label, x in e.particles.items()))


def d_E(e1: Configuration, e2: Configuration) -> float:
    """
    Metric on configurations.

    Sum over shared labels of |x^k - y^k| ^ 1, plus the size of the
    symmetric difference of the label sets.
    """
    if e1.dim != e2.dim:
        raise DimensionError(f"dimension: d_E between d={e1.dim} and d={e2.dim}")
    keys1, keys2 = set(e1.particles), set(e2.particles)
    common = keys1 & keys2
    motion = 0.0
    for label in sorted(common):
        gap = np.linalg.norm(np.subtract(e1.particles[label], e2.particles[label]))
        motion += min(float(gap), 1.0)
    return motion + len(keys1 ^ keys2)

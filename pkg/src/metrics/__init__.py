"""
Metrics package.
Exports the Fourier-Wasserstein metric, the negative Sobolev norm and the
truncated Wasserstein distance with its dual bound.
"""

from .fourier import (
    LambdaIndex, QuadratureMode, QuadratureScheme, MetricResult,
    lambda_for_dim, rho_F, sobolev_neg_norm, d_F, spectral_energy,
    matern_kernel_d1, bessel_kernel, default_scheme
)
from .wasserstein import (
    TransportResult, TrialFunction, DualBound, truncated_w1, normalized_w1,
    w1_dual_lower_bound, distance_trial, solve_transport, truncated_cost
)
from .domination import check_domination, domination_constant

__all__ = [
    'LambdaIndex',
    'QuadratureMode',
    'QuadratureScheme',
    'MetricResult',
    'lambda_for_dim',
    'rho_F',
    'sobolev_neg_norm',
    'd_F',
    'spectral_energy',
    'matern_kernel_d1',
    'bessel_kernel',
    'default_scheme',
    'TransportResult',
    'TrialFunction',
    'DualBound',
    'truncated_w1',
    'normalized_w1',
    'w1_dual_lower_bound',
    'distance_trial',
    'solve_transport',
    'truncated_cost',
    'check_domination',
    'domination_constant',
]

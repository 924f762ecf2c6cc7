"""
Control package.
Closed-loop policies, the cost functional, value approximation and dynamic
programming checks.
"""

from .policy import Policy, PolicyFamily, n_parameters, zero_policy, embed_parameters, TANH_CENTERS
from .cost import (
    CostSpec, CostEstimate, QuadraticCostParams, COST_FAMILIES,
    build_cost, build_quadratic_cost, evaluate_cost, run_cost, terminal_value, bootstrap_stderr
)
from .value import (
    SearchBudget, RestartTrace, SearchResult, ValueResult,
    canonical_law, policy_search, value_from_law, approximate_value, check_dpp,
    check_policy_monotonicity, check_value_continuity, check_xi_invariance
)

__all__ = [
    'Policy',
    'PolicyFamily',
    'n_parameters',
    'zero_policy',
    'embed_parameters',
    'TANH_CENTERS',
    'CostSpec',
    'CostEstimate',
    'QuadraticCostParams',
    'COST_FAMILIES',
    'build_cost',
    'build_quadratic_cost',
    'evaluate_cost',
    'run_cost',
    'terminal_value',
    'bootstrap_stderr',
    'SearchBudget',
    'RestartTrace',
    'SearchResult',
    'ValueResult',
    'canonical_law',
    'policy_search',
    'value_from_law',
    'approximate_value',
    'check_dpp',
    'check_policy_monotonicity',
    'check_value_continuity',
    'check_xi_invariance',
]

"""
Dynamics package.
Simulates the controlled branching McKean-Vlasov particle system and checks
its a-priori estimates.
"""

from .model import Assumption, ModelSpec, MODEL_FAMILIES, build_model
from .samplers import (
    InitialLaw, InitialState, DiracLaw, RoundedLaw, PoissonizedLaw, FixedLaw,
    CoupledLaw, PerturbedPairLaw, PoissonCoupledPairLaw,
    dirac_sampler, rounded_sampler, poissonized_sampler,
    perturbed_pair_sampler, poisson_coupled_pair_sampler, single_particle
)
from .simulator import (
    InteractionMode, SimConfig, BranchEvent, StepView, PopulationPath,
    simulate, mean_measure, mean_functional, mean_and_stderr
)
from .estimates import (
    check_first_moment_bound, check_second_moment_bound, check_position_sum_bound,
    check_path_stability, check_measure_stability, check_time_continuity, check_flow_property,
    batch_d_E, first_moment_bound, second_moment_bound, time_continuity_curve
)

__all__ = [
    'Assumption',
    'ModelSpec',
    'MODEL_FAMILIES',
    'build_model',
    'InitialLaw',
    'InitialState',
    'DiracLaw',
    'RoundedLaw',
    'PoissonizedLaw',
    'FixedLaw',
    'CoupledLaw',
    'PerturbedPairLaw',
    'PoissonCoupledPairLaw',
    'dirac_sampler',
    'rounded_sampler',
    'poissonized_sampler',
    'perturbed_pair_sampler',
    'poisson_coupled_pair_sampler',
    'single_particle',
    'InteractionMode',
    'SimConfig',
    'BranchEvent',
    'StepView',
    'PopulationPath',
    'simulate',
    'mean_measure',
    'mean_functional',
    'mean_and_stderr',
    'check_first_moment_bound',
    'check_second_moment_bound',
    'check_position_sum_bound',
    'check_path_stability',
    'check_measure_stability',
    'check_time_continuity',
    'check_flow_property',
    'batch_d_E',
    'first_moment_bound',
    'second_moment_bound',
    'time_continuity_curve',
]

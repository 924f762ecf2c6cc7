"""
Calculus package.
Cylinder functionals with exact measure derivatives, the generator and the
Hamiltonian of the control problem, Ito residuals and the auxiliary function
of the comparison argument.
"""

from .cylinder import (
    InnerFunction, CylinderFunctional,
    constant_one, coordinate, squared_norm, japanese_bracket, cosine, gaussian_bump,
    mass_functional, linear_functional, mass_squared, squared_linear, aux_functional,
    time_weighted, combine,
    lfd, lfd_grad, lfd_hess, segment_measure, segment_reconstruction,
    lfd_segment_check, lfd_fd_check
)
from .generator import (
    HamiltonianValue, ItoResidual,
    generator_apply, hamiltonian_G, hjb_residual, terminal_gap,
    hamiltonian_lipschitz_constant, hamiltonian_lipschitz_check,
    ito_constant, ito_residual, check_ito, check_ito_halving
)
from .auxiliary import (
    AuxFunction, mass_cap, exclusion_threshold, aux_sublevel_check, exclusion_check
)

__all__ = [
    'InnerFunction',
    'CylinderFunctional',
    'constant_one',
    'coordinate',
    'squared_norm',
    'japanese_bracket',
    'cosine',
    'gaussian_bump',
    'mass_functional',
    'linear_functional',
    'mass_squared',
    'squared_linear',
    'aux_functional',
    'time_weighted',
    'combine',
    'lfd',
    'lfd_grad',
    'lfd_hess',
    'segment_measure',
    'segment_reconstruction',
    'lfd_segment_check',
    'lfd_fd_check',
    'HamiltonianValue',
    'ItoResidual',
    'generator_apply',
    'hamiltonian_G',
    'hjb_residual',
    'terminal_gap',
    'hamiltonian_lipschitz_constant',
    'hamiltonian_lipschitz_check',
    'ito_constant',
    'ito_residual',
    'check_ito',
    'check_ito_halving',
    'AuxFunction',
    'mass_cap',
    'exclusion_threshold',
    'aux_sublevel_check',
    'exclusion_check',
]

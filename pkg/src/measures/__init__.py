"""Measures package: labels, atomic measures, configurations and d_E."""

from .models import Label, AtomicMeasure, Configuration, is_antichain
from .operations import integrate, config_to_measure, configuration_sum, d_E

__all__ = [
    "Label",
    "AtomicMeasure",
    "Configuration",
    "is_antichain",
    "integrate",
    "config_to_measure",
    "configuration_sum",
    "d_E",
]

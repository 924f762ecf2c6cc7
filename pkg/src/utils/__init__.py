"""Utilities package: settings, logging and errors."""

from .config import settings
from .logger import setup_logger, set_log_level, app_logger
from .errors import (
    ToolkitError, DimensionError, SchemeError, ConfigError, ModelBoundError,
    NumericalError, CertificationError, CouplingError, GridError, SuiteError
)

__all__ = [
    "settings",
    "setup_logger",
    "set_log_level",
    "app_logger",
    "ToolkitError",
    "DimensionError",
    "SchemeError",
    "ConfigError",
    "ModelBoundError",
    "NumericalError",
    "CertificationError",
    "CouplingError",
    "GridError",
    "SuiteError",
]

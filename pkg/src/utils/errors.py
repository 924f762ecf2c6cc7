"""
Exception hierarchy for the toolkit.
Every error carries a short machine code used in CLI diagnostics.
"""

from typing import Any, Dict, Optional


class ToolkitError(ValueError):
    """Base class for all toolkit errors."""

    code = "toolkit"

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message

    def diagnostic(self) -> str:
        """Single-line, machine-parsable diagnostic."""
        text = " ".join(self.message.split())
        return f"error[{self.code}]: {text}"


class DimensionError(ToolkitError):
    """Measures, configurations or fields of different dimensions were combined."""

    code = "dimension"


class SchemeError(ToolkitError):
    """A quadrature scheme was requested outside its domain of validity."""

    code = "scheme"


class ConfigError(ToolkitError):
    """Invalid run configuration, optionally pinned to a source line."""

    code = "config"

    def __init__(self, message: str, line: Optional[int] = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ModelBoundError(ToolkitError):
    """A coefficient or cost left its declared bounds at an evaluated point."""

    code = "bound"


class NumericalError(ToolkitError):
    """Non-finite simulation state."""

    code = "numerical"

    def __init__(self, message: str, report: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.report = report or {}


class CertificationError(ToolkitError):
    """A trial function or policy failed its Lipschitz certificate."""

    code = "certification"


class CouplingError(ToolkitError):
    """Two runs that must share noise streams do not."""

    code = "coupling"


class GridError(ToolkitError):
    """A requested time is not a point of the simulation grid."""

    code = "grid"


class SuiteError(ToolkitError):
    """Unknown acceptance suite."""

    code = "suite"

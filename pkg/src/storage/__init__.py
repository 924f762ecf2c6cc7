"""Storage package: report models, measure files and result persistence."""

from .models import CheckStatus, CheckReport, SimulationStats
from .measure_io import parse_measure, format_measure, read_measure, write_measure
from .results import ResultStore, dumps_report, to_jsonable

__all__ = [
    "CheckStatus",
    "CheckReport",
    "SimulationStats",
    "parse_measure",
    "format_measure",
    "read_measure",
    "write_measure",
    "ResultStore",
    "dumps_report",
    "to_jsonable",
]

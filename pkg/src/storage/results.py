"""
Result persistence.
Writes JSON reports and CSV tables into an output directory.
"""

import json
import math
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel

from ..utils.config import settings
from ..utils.logger import setup_logger

logger = setup_logger(__name__)


def to_jsonable(value: Any) -> Any:
    """Convert numpy scalars/arrays, pydantic models and non-finite floats for JSON."""
    if isinstance(value, BaseModel):
        return to_jsonable(value.model_dump(mode="python"))
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    return value


def dumps_report(report: Any) -> str:
    """Deterministic JSON rendering (sorted keys, fixed separators)."""
    return json.dumps(to_jsonable(report), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


class ResultStore:
    """Output-directory manager for reports and tables."""

    def __init__(self, out_dir: Optional[str] = None):
        """
        Initialize the store.

        Args:
            out_dir: Output directory (defaults to settings)
        """
        self.out_dir = Path(out_dir or settings.out_dir)
        self.written: List[str] = []
        self.logger = setup_logger(self.__class__.__name__)

    def _target(self, name: str) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        path = self.out_dir / name
        self.written.append(str(path))
        return path

    def write_json(self, name: str, report: Any) -> Path:
        path = self._target(name)
        path.write_text(dumps_report(report), encoding="utf-8")
        self.logger.info(f"Wrote report {path}")
        return path

    def write_table(self, name: str, rows: List[Dict[str, Any]], columns: Optional[List[str]] = None) -> Path:
        """Write rows as CSV through pandas."""
        path = self._target(name)
        frame = pd.DataFrame(rows, columns=columns)
        frame.to_csv(path, index=False, float_format="%.17g")
        self.logger.info(f"Wrote table {path} ({len(frame)} rows)")
        return path

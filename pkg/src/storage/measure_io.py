"""
Line-oriented measure file format.

One atom per line, ``w x1 ... xd``; ``#`` starts a comment. The dimension is
inferred from the first data line. Floats are written with ``repr`` so that a
write/read cycle is exact.
"""

from pathlib import Path
from typing import List, Optional, Union

import numpy as np

from ..measures.models import AtomicMeasure
from ..utils.errors import ConfigError, DimensionError
from ..utils.logger import setup_logger

logger = setup_logger(__name__)

PathLike = Union[str, Path]


def parse_measure(text: str, dim: Optional[int] = None) -> AtomicMeasure:
    """
    Parse measure text.

    Args:
        text: File contents
        dim: Dimension to use when the file holds no atoms

    Returns:
        Parsed atomic measure
    """
    weights: List[float] = []
    positions: List[List[float]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            values = [float(tok) for tok in line.split()]
        except ValueError:
            raise ConfigError(f"non-numeric token in measure line '{raw.strip()}'", line=lineno)
        if len(values) < 2:
            raise ConfigError("an atom line needs a weight and at least one coordinate", line=lineno)
        if dim is None:
            dim = len(values) - 1
        elif len(values) - 1 != dim:
            raise DimensionError(
                f"dimension: line {lineno} has {len(values) - 1} coordinates, expected {dim}"
            )
        if values[0] < 0:
            raise ConfigError("atom weights must be nonnegative", line=lineno)
        weights.append(values[0])
        positions.append(values[1:])
    if dim is None:
        raise DimensionError("dimension: empty measure file and no dimension given")
    return AtomicMeasure(
        positions=np.array(positions, dtype=float).reshape(-1, dim),
        weights=np.array(weights, dtype=float),
        dim=dim,
    )


def format_measure(m: AtomicMeasure, header: Optional[str] = None) -> str:
    """Render a measure in the line-oriented format."""
    lines = []
    if header:
        lines.extend(f"# {h}" for h in header.splitlines())
    for x, w in zip(m.positions.tolist(), m.weights.tolist()):
        lines.append(" ".join(repr(float(v)) for v in [w, *x]))
    return "\n".join(lines) + "\n"


def read_measure(path: PathLike, dim: Optional[int] = None) -> AtomicMeasure:
    """Read a measure file."""
    text = Path(path).read_text(encoding="utf-8")
    measure = parse_measure(text, dim=dim)
    logger.debug(f"Read {measure.n_atoms} atoms (d={measure.dim}) from {path}")
    return measure


def write_measure(m: AtomicMeasure, path: PathLike, header: Optional[str] = None) -> Path:
    """Write a measure file, creating parent directories."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_measure(m, header=header), encoding="utf-8")
    return path

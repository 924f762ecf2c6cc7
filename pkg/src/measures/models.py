"""
Data models for finite measures and branching configurations.
Defines pydantic models for Ulam-Harris-Neveu labels, atomic measures on R^d
and particle configurations with validation.
"""

from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ..utils.errors import DimensionError


class Label(BaseModel):
    """Ulam-Harris-Neveu label; the empty path is the root."""

    model_config = ConfigDict(frozen=True)

    path: Tuple[int, ...] = Field(
        default=(),
        description="Finite sequence of positive integers"
    )

    @field_validator("path")
    @classmethod
    def validate_path(cls, v: Tuple[int, ...]) -> Tuple[int, ...]:
        """Labels are built from positive integers only."""
        if any(int(i) < 1 for i in v):
            raise ValueError("label entries must be positive integers")
        return tuple(int(i) for i in v)

    @classmethod
    def root(cls) -> "Label":
        return cls(path=())

    @classmethod
    def parse(cls, text: str) -> "Label":
        """Parse the string form produced by ``str(label)``."""
        text = text.strip()
        if text in ("", "∅", "root"):
            return cls.root()
        return cls(path=tuple(int(part) for part in text.split(".")))

    def child(self, i: int) -> "Label":
        return Label(path=self.path + (i,))

    def concat(self, other: "Label") -> "Label":
        return Label(path=self.path + other.path)

    def precedes(self, other: "Label") -> bool:
        """Strict prefix order k < k'."""
        n = len(self.path)
        return n < len(other.path) and other.path[:n] == self.path

    @property
    def parent(self) -> Optional["Label"]:
        if not self.path:
            return None
        return Label(path=self.path[:-1])

    @property
    def depth(self) -> int:
        return len(self.path)

    def __str__(self) -> str:
        return ".".join(str(i) for i in self.path) if self.path else "∅"

    def __lt__(self, other: "Label") -> bool:
        return self.path < other.path


def is_antichain(paths: Iterable[Tuple[int, ...]]) -> bool:
    """
    Check that no label path is a prefix of another.

    In lexicographic order a prefix sorts directly before some extension of
    itself, so adjacent pairs suffice.
    """
    ordered = sorted(paths)
    for left, right in zip(ordered, ordered[1:]):
        if left == right:
            return False
        if len(left) < len(right) and right[:len(left)] == left:
            return False
    return True


class AtomicMeasure(BaseModel):
    """Finite nonnegative measure on R^d as a list of weighted atoms."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    positions: np.ndarray = Field(
        ...,
        description="Atom positions, shape (n, d)"
    )
    weights: np.ndarray = Field(
        ...,
        description="Nonnegative atom weights, shape (n,)"
    )
    dim: int = Field(
        ...,
        ge=1,
        description="Dimension d of the underlying space"
    )

    @model_validator(mode="before")
    @classmethod
    def coerce_arrays(cls, data):
        if not isinstance(data, dict):
            return data
        data = dict(data)
        weights = np.asarray(data.get("weights", []), dtype=float).reshape(-1)
        dim = data.get("dim")
        positions = np.asarray(data.get("positions", []), dtype=float)
        if dim is None:
            if positions.ndim == 2 and positions.shape[1] > 0:
                dim = positions.shape[1]
            elif positions.ndim == 1 and positions.size > 0:
                dim = 1
            else:
                raise DimensionError("dimension of an empty measure must be given")
        dim = int(dim)
        if positions.size == 0:
            positions = np.zeros((0, dim))
        elif positions.ndim == 1:
            positions = positions.reshape(-1, 1) if dim == 1 else positions.reshape(1, -1)
        if positions.ndim != 2 or positions.shape[1] != dim:
            raise DimensionError(
                f"dimension: positions of shape {positions.shape} do not match d={dim}"
            )
        if positions.shape[0] != weights.shape[0]:
            raise ValueError(
                f"{positions.shape[0]} positions but {weights.shape[0]} weights"
            )
        positions = positions.copy()
        weights = weights.copy()
        positions.setflags(write=False)
        weights.setflags(write=False)
        data.update(positions=positions, weights=weights, dim=dim)
        return data

    @model_validator(mode="after")
    def check_invariants(self) -> "AtomicMeasure":
        if not np.all(np.isfinite(self.positions)):
            raise ValueError("atom positions must be finite")
        if not np.all(np.isfinite(self.weights)) or np.any(self.weights < 0):
            raise ValueError("atom weights must be finite and nonnegative")
        return self

    # ------------------------------------------------------------------
    # Constructors

    @classmethod
    def zero(cls, dim: int) -> "AtomicMeasure":
        return cls(positions=np.zeros((0, dim)), weights=np.zeros(0), dim=dim)

    @classmethod
    def dirac(cls, position: Sequence[float], weight: float = 1.0) -> "AtomicMeasure":
        point = np.atleast_1d(np.asarray(position, dtype=float))
        return cls(positions=point.reshape(1, -1), weights=[weight], dim=point.size)

    @classmethod
    def from_atoms(
        cls,
        atoms: Sequence[Tuple[Sequence[float], float]],
        dim: Optional[int] = None
    ) -> "AtomicMeasure":
        """Build from ``[(position, weight), ...]``."""
        if not atoms:
            if dim is None:
                raise DimensionError("dimension of an empty measure must be given")
            return cls.zero(dim)
        positions = np.array([np.atleast_1d(np.asarray(x, dtype=float)) for x, _ in atoms])
        weights = np.array([w for _, w in atoms], dtype=float)
        return cls(positions=positions, weights=weights, dim=dim or positions.shape[1])

    # ------------------------------------------------------------------
    # Moments

    @property
    def n_atoms(self) -> int:
        return int(self.weights.shape[0])

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    @property
    def first_moment(self) -> np.ndarray:
        """Vector <m, x>."""
        return self.weights @ self.positions if self.n_atoms else np.zeros(self.dim)

    @property
    def absolute_moment(self) -> float:
        """<m, |x|>."""
        return float(self.weights @ np.linalg.norm(self.positions, axis=1)) if self.n_atoms else 0.0

    @property
    def second_moment(self) -> float:
        """<m, |x|^2>."""
        return float(self.weights @ np.sum(self.positions ** 2, axis=1)) if self.n_atoms else 0.0

    # ------------------------------------------------------------------
    # Transformations (all return new measures)

    def normalized(self) -> "AtomicMeasure":
        """Drop zero-weight atoms."""
        keep = self.weights > 0
        return AtomicMeasure(positions=self.positions[keep], weights=self.weights[keep], dim=self.dim)

    def merged(self) -> "AtomicMeasure":
        """Merge atoms sitting at identical positions, in sorted position order."""
        base = self.normalized()
        if base.n_atoms == 0:
            return base
        unique, inverse = np.unique(base.positions, axis=0, return_inverse=True)
        weights = np.zeros(unique.shape[0])
        np.add.at(weights, np.asarray(inverse).reshape(-1), base.weights)
        return AtomicMeasure(positions=unique, weights=weights, dim=self.dim)

    def scaled(self, factor: float) -> "AtomicMeasure":
        if factor < 0:
            raise ValueError("scaling factor must be nonnegative")
        return AtomicMeasure(positions=self.positions, weights=self.weights * factor, dim=self.dim)

    def add(self, other: "AtomicMeasure") -> "AtomicMeasure":
        if other.dim != self.dim:
            raise DimensionError(f"dimension: cannot add d={self.dim} and d={other.dim}")
        return AtomicMeasure(
            positions=np.vstack([self.positions, other.positions]),
            weights=np.concatenate([self.weights, other.weights]),
            dim=self.dim,
        )

    def shifted(self, offset: Sequence[float]) -> "AtomicMeasure":
        offset = np.asarray(offset, dtype=float).reshape(1, -1)
        if offset.shape[1] != self.dim:
            raise DimensionError(f"dimension: shift of size {offset.shape[1]} for d={self.dim}")
        return AtomicMeasure(positions=self.positions + offset, weights=self.weights, dim=self.dim)

    def atoms(self) -> List[Tuple[Tuple[float, ...], float]]:
        return [(tuple(x), float(w)) for x, w in zip(self.positions.tolist(), self.weights.tolist())]

    def __eq__(self, other: object) -> bool:
        """Equality as measures: invariant under merge/split of equal-position atoms."""
        if not isinstance(other, AtomicMeasure):
            return NotImplemented
        if other.dim != self.dim:
            return False
        a, b = self.merged(), other.merged()
        return (
            a.n_atoms == b.n_atoms
            and np.array_equal(a.positions, b.positions)
            and np.allclose(a.weights, b.weights, rtol=1e-12, atol=1e-15)
        )

    __hash__ = None


class Configuration(BaseModel):
    """
    Element of E: finitely many particles with pairwise-incomparable labels.
    The empty configuration is the null measure e_0.
    """

    model_config = ConfigDict(frozen=True)

    particles: Dict[Label, Tuple[float, ...]] = Field(
        default_factory=dict,
        description="Map label -> position"
    )
    dim: int = Field(
        ...,
        ge=1,
        description="Dimension d of particle positions"
    )

    @model_validator(mode="after")
    def check_invariants(self) -> "Configuration":
        for label, x in self.particles.items():
            if len(x) != self.dim:
                raise DimensionError(
                    f"dimension: particle {label} has position of size {len(x)}, expected {self.dim}"
                )
        if not is_antichain(label.path for label in self.particles):
            raise ValueError("configuration labels must form an antichain")
        return self

    @classmethod
    def empty(cls, dim: int) -> "Configuration":
        return cls(particles={}, dim=dim)

    @classmethod
    def from_items(
        cls,
        items: Iterable[Tuple[object, Sequence[float]]],
        dim: Optional[int] = None
    ) -> "Configuration":
        """
        Build from ``(label, position)`` pairs.

        Args:
            items: Labels may be ``Label`` instances, tuples of ints or strings
            dim: Dimension, required when ``items`` is empty

        Returns:
            Validated configuration
        """
        particles: Dict[Label, Tuple[float, ...]] = {}
        for label, x in items:
            if isinstance(label, str):
                label = Label.parse(label)
            elif not isinstance(label, Label):
                label = Label(path=tuple(label))
            position = tuple(float(v) for v in np.atleast_1d(np.asarray(x, dtype=float)))
            if label in particles:
                raise ValueError(f"duplicate label {label}")
            particles[label] = position
        if dim is None:
            if not particles:
                raise DimensionError("dimension of an empty configuration must be given")
            dim = len(next(iter(particles.values())))
        return cls(particles=particles, dim=dim)

    @classmethod
    def from_positions(cls, positions: np.ndarray) -> "Configuration":
        """Canonical labelling: a lone particle is the root, otherwise 1..n."""
        positions = np.asarray(positions, dtype=float)
        if positions.ndim == 1:
            positions = positions.reshape(-1, 1)
        n, dim = positions.shape
        if n == 1:
            return cls(particles={Label.root(): tuple(positions[0])}, dim=dim)
        return cls(
            particles={Label(path=(i + 1,)): tuple(positions[i]) for i in range(n)},
            dim=dim,
        )

    @property
    def size(self) -> int:
        return len(self.particles)

    @property
    def labels(self) -> List[Label]:
        return sorted(self.particles)

    def position_array(self) -> np.ndarray:
        labels = self.labels
        if not labels:
            return np.zeros((0, self.dim))
        return np.array([self.particles[k] for k in labels], dtype=float)

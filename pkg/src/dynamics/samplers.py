"""
Initial laws: samplers producing one configuration per replica.

A law exposes its draw as an ``InitialState`` (replica-major particle
arrays with label paths) for the simulator, and as per-replica
``Configuration`` objects for inspection.
"""

from abc import ABC, abstractmethod
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .rng import Channel, philox_generator
from ..measures.models import AtomicMeasure, Configuration, Label
from ..metrics.wasserstein import normalized_w1
from ..utils.errors import ConfigError, DimensionError
from ..utils.logger import setup_logger

LabelPath = Tuple[int, ...]


class InitialState(NamedTuple):
    """Replica-major particle arrays."""
    replica: np.ndarray
    paths: List[LabelPath]
    positions: np.ndarray

    @classmethod
    def empty(cls, dim: int) -> "InitialState":
        return cls(np.zeros(0, dtype=np.int64), [], np.zeros((0, dim)))

    def configurations(self, replicas: int, dim: int) -> List[Configuration]:
        out: List[List[Tuple[LabelPath, np.ndarray]]] = [[] for _ in range(replicas)]
        for r, path, x in zip(self.replica.tolist(), self.paths, self.positions):
            out[r].append((path, x))
        return [Configuration.from_items(items, dim=dim) for items in out]


def _canonical_paths(counts: np.ndarray) -> List[LabelPath]:
    """Per replica: a lone particle is the root, otherwise labels 1..n."""
    paths: List[LabelPath] = []
    for n in counts.tolist():
        if n == 1:
            paths.append(())
        else:
            paths.extend((j,) for j in range(1, n + 1))
    return paths


def _state_from_atom_counts(nu: AtomicMeasure, counts: np.ndarray) -> InitialState:
    """counts (M, n_atoms) copies of every atom per replica."""
    replicas, n_atoms = counts.shape
    flat = counts.reshape(-1)
    replica = np.repeat(np.repeat(np.arange(replicas, dtype=np.int64), n_atoms), flat)
    positions = np.repeat(np.tile(nu.positions, (replicas, 1)), flat, axis=0)
    return InitialState(replica, _canonical_paths(counts.sum(axis=1)), positions)


def state_from_configurations(configs: Sequence[Configuration], dim: int) -> InitialState:
    """Flatten per-replica configurations, keeping each dict's insertion order."""
    replica, paths, rows = [], [], []
    for r, config in enumerate(configs):
        if config.dim != dim:
            raise DimensionError(f"dimension: replica {r} has d={config.dim}, expected {dim}")
        for label, x in config.particles.items():
            replica.append(r)
            paths.append(label.path)
            rows.append(x)
    if not rows:
        return InitialState.empty(dim)
    return InitialState(np.asarray(replica, dtype=np.int64), paths, np.asarray(rows, dtype=float))


class InitialLaw(ABC):
    """Law of the initial configuration xi."""

    name = "law"

    def __init__(self, dim: int):
        self.dim = dim
        self.logger = setup_logger(self.__class__.__name__)

    @abstractmethod
    def initial_state(self, replicas: int, seed: int) -> InitialState:
        """Draw one configuration per replica."""

    def sample(self, replicas: int, seed: int) -> List[Configuration]:
        return self.initial_state(replicas, seed).configurations(replicas, self.dim)

    def describe(self) -> dict:
        return {"law": self.name, "dim": self.dim}


class DiracLaw(InitialLaw):
    """Deterministic xi = e in every replica."""

    name = "dirac"

    def __init__(self, configuration: Configuration):
        super().__init__(configuration.dim)
        self.configuration = configuration

    def initial_state(self, replicas: int, seed: int) -> InitialState:
        return state_from_configurations([self.configuration] * replicas, self.dim)


class RoundedLaw(InitialLaw):
    """
    Canonical xi for a target measure nu: each atom of weight w contributes
    floor(w) copies plus one more with probability frac(w). Integer-weight
    measures are reproduced exactly; E <xi, f> = <nu, f> in general.
    """

    name = "rounded"

    def __init__(self, nu: AtomicMeasure):
        super().__init__(nu.dim)
        self.nu = nu.merged()

    def initial_state(self, replicas: int, seed: int) -> InitialState:
        weights = self.nu.weights
        whole = np.floor(weights).astype(np.int64)
        frac = weights - whole
        if np.all(frac == 0):
            counts = np.tile(whole, (replicas, 1))
        else:
            rng = philox_generator(seed, int(Channel.INIT), 1)
            counts = whole[None, :] + (rng.random((replicas, weights.size)) < frac[None, :])
        return _state_from_atom_counts(self.nu, counts)

    def describe(self) -> dict:
        return {"law": self.name, "dim": self.dim, "atoms": self.nu.atoms()}


class PoissonizedLaw(InitialLaw):
    """xi = Poisson random measure with intensity nu."""

    name = "poissonized"

    def __init__(self, nu: AtomicMeasure):
        super().__init__(nu.dim)
        self.nu = nu.merged()

    def initial_state(self, replicas: int, seed: int) -> InitialState:
        rng = philox_generator(seed, int(Channel.INIT), 2)
        counts = rng.poisson(self.nu.weights[None, :], size=(replicas, self.nu.n_atoms)).astype(np.int64)
        return _state_from_atom_counts(self.nu, counts)

    def describe(self) -> dict:
        return {"law": self.name, "dim": self.dim, "atoms": self.nu.atoms()}


class FixedLaw(InitialLaw):
    """Replays a given state (used for restarts and for each side of a coupled pair)."""

    name = "fixed"

    def __init__(self, state: InitialState, replicas: int, dim: int):
        super().__init__(dim)
        self.state = state
        self.replicas = replicas

    def initial_state(self, replicas: int, seed: int) -> InitialState:
        if replicas != self.replicas:
            raise ConfigError(f"law holds {self.replicas} replicas, {replicas} requested")
        return self.state


# ----------------------------------------------------------------------
# Coupled pairs (xi, xi') on one probability space

class CoupledLaw(ABC):
    """Pair of initial laws drawn jointly."""

    name = "coupled"

    def __init__(self, dim: int):
        self.dim = dim
        self.logger = setup_logger(self.__class__.__name__)

    @abstractmethod
    def pair_states(self, replicas: int, seed: int) -> Tuple[InitialState, InitialState]:
        """Joint draw of both initial states."""

    def pair_laws(self, replicas: int, seed: int) -> Tuple[FixedLaw, FixedLaw]:
        first, second = self.pair_states(replicas, seed)
        return FixedLaw(first, replicas, self.dim), FixedLaw(second, replicas, self.dim)

    def sample_pairs(self, replicas: int, seed: int) -> Tuple[List[Configuration], List[Configuration]]:
        first, second = self.pair_states(replicas, seed)
        return first.configurations(replicas, self.dim), second.configurations(replicas, self.dim)


class PerturbedPairLaw(CoupledLaw):
    """xi from a base law; xi' moves every particle of xi by epsilon along a fixed direction."""

    name = "perturbed_pair"

    def __init__(self, base: InitialLaw, epsilon: float, direction: Optional[Sequence[float]] = None):
        super().__init__(base.dim)
        if epsilon < 0:
            raise ConfigError("perturbation size must be nonnegative")
        self.base = base
        self.epsilon = float(epsilon)
        unit = np.zeros(base.dim)
        unit[0] = 1.0
        if direction is not None:
            unit = np.asarray(direction, dtype=float).reshape(-1)
            if unit.size != base.dim:
                raise DimensionError(f"dimension: direction of size {unit.size} for d={base.dim}")
            unit = unit / np.linalg.norm(unit)
        self.direction = unit

    def pair_states(self, replicas: int, seed: int) -> Tuple[InitialState, InitialState]:
        first = self.base.initial_state(replicas, seed)
        moved = first.positions + self.epsilon * self.direction[None, :]
        return first, InitialState(first.replica.copy(), list(first.paths), moved)


class PoissonCoupledPairLaw(CoupledLaw):
    """
    Poisson random measures with intensities nu and nu' coupled so that the
    counts differ by a Poisson(|mass gap|) excess on the heavier side and the
    shared particles are paired through the optimal plan between the
    normalized measures.
    """

    name = "poisson_coupled_pair"

    def __init__(self, nu: AtomicMeasure, nu_prime: AtomicMeasure):
        if nu.dim != nu_prime.dim:
            raise DimensionError(f"dimension: coupled laws of d={nu.dim} and d={nu_prime.dim}")
        super().__init__(nu.dim)
        self.nu = nu.merged()
        self.nu_prime = nu_prime.merged()
        if self.nu.total_mass > 0 and self.nu_prime.total_mass > 0:
            self.plan = normalized_w1(self.nu, self.nu_prime).plan
        else:
            self.plan = None

    def pair_states(self, replicas: int, seed: int) -> Tuple[InitialState, InitialState]:
        rng = philox_generator(seed, int(Channel.INIT), 3)
        a, b = self.nu.total_mass, self.nu_prime.total_mass
        shared = rng.poisson(min(a, b), size=replicas) if self.plan is not None else np.zeros(replicas, int)
        extra = rng.poisson(abs(a - b), size=replicas)
        heavy = self.nu if a >= b else self.nu_prime

        joint = None
        if self.plan is not None:
            cells_mass = np.clip(self.plan.reshape(-1), 0.0, None)
            joint = cells_mass / cells_mass.sum()
        rep_1, path_1, pos_1 = [], [], []
        rep_2, path_2, pos_2 = [], [], []
        n_cols = self.nu_prime.n_atoms
        for r in range(replicas):
            k = int(shared[r])
            if k:
                cells = rng.choice(joint.size, size=k, p=joint)
                rows, cols = np.divmod(cells, n_cols)
                for j in range(k):
                    rep_1.append(r)
                    rep_2.append(r)
                    path_1.append((j + 1,))
                    path_2.append((j + 1,))
                    pos_1.append(self.nu.positions[rows[j]])
                    pos_2.append(self.nu_prime.positions[cols[j]])
            e = int(extra[r])
            if e:
                picks = rng.choice(heavy.n_atoms, size=e, p=heavy.weights / heavy.total_mass)
                target = (rep_1, path_1, pos_1) if heavy is self.nu else (rep_2, path_2, pos_2)
                for j in range(e):
                    target[0].append(r)
                    target[1].append((k + j + 1,))
                    target[2].append(heavy.positions[picks[j]])
        return self._state(rep_1, path_1, pos_1), self._state(rep_2, path_2, pos_2)

    def _state(self, replica: list, paths: list, positions: list) -> InitialState:
        if not paths:
            return InitialState.empty(self.dim)
        return InitialState(np.asarray(replica, dtype=np.int64), paths, np.asarray(positions, dtype=float))


def dirac_sampler(configuration: Configuration) -> DiracLaw:
    return DiracLaw(configuration)


def rounded_sampler(nu: AtomicMeasure) -> RoundedLaw:
    return RoundedLaw(nu)


def poissonized_sampler(nu: AtomicMeasure) -> PoissonizedLaw:
    return PoissonizedLaw(nu)


def perturbed_pair_sampler(base: InitialLaw, epsilon: float,
                           direction: Optional[Sequence[float]] = None) -> PerturbedPairLaw:
    return PerturbedPairLaw(base, epsilon, direction)


def poisson_coupled_pair_sampler(nu: AtomicMeasure, nu_prime: AtomicMeasure) -> PoissonCoupledPairLaw:
    return PoissonCoupledPairLaw(nu, nu_prime)


def single_particle(position: Sequence[float]) -> Configuration:
    """Configuration with one root particle."""
    point = np.atleast_1d(np.asarray(position, dtype=float))
    return Configuration(particles={Label.root(): tuple(point)}, dim=point.size)

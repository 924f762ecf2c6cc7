"""
Simulator for the controlled branching McKean-Vlasov dynamics.

All replicas advance together on an absolute time grid t = k * dt. Each step
freezes the interaction measure, moves every particle by Euler-Maruyama and
then resolves branching by thinning a rate gamma_bar candidate stream.
Particle state is kept in replica-major arrays; labels are interned in a
registry shared by all replicas.

Noise is keyed by absolute slot on a grid of width noise_dt (dt by default).
A step of dt = r * noise_dt sums the Gaussian draws of its r slots and takes
the first accepted candidate among them, so runs at dt, dt/2, dt/4 sharing
noise_dt see common random numbers.
"""

from enum import Enum
from typing import Callable, Dict, List, NamedTuple, Optional, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .model import ModelSpec
from .rng import Channel, child_hash, label_hash, normals, pair_keys, stream_keys, uniforms
from .samplers import FixedLaw, InitialLaw, InitialState, LabelPath
from ..measures.models import AtomicMeasure, Configuration, Label
from ..storage.models import SimulationStats
from ..utils.config import settings
from ..utils.errors import ConfigError, DimensionError, GridError, NumericalError
from ..utils.logger import setup_logger

logger = setup_logger(__name__)

GRID_TOLERANCE = 1e-9

FrozenFlow = Callable[[float], AtomicMeasure]


class InteractionMode(str, Enum):
    """Which measure the coefficients see."""
    MEAN_FIELD = "mean_field"   # replica average, rebuilt every step
    FROZEN = "frozen"           # externally supplied flow


class SimConfig(BaseModel):
    """Run parameters of one simulation."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    t0: float = Field(default=0.0, ge=0, description="Start time (a grid point)")
    T: float = Field(default=1.0, description="Horizon (a grid point)")
    dt: float = Field(default=1e-3, gt=0, description="Step size")
    replicas: int = Field(default=1000, ge=1, description="Independent replicas M")
    seed: int = Field(
        default_factory=lambda: settings.default_seed,
        ge=0,
        lt=2**64,
        description="Master seed"
    )
    interaction: InteractionMode = Field(default=InteractionMode.MEAN_FIELD)
    frozen_flow: Optional[Union[AtomicMeasure, FrozenFlow]] = Field(
        default=None,
        description="Measure (or t -> measure) seen by the coefficients in frozen mode"
    )
    record_stride: int = Field(
        default=1,
        ge=1,
        description="Keep a snapshot every this many steps (the horizon is always kept)"
    )
    noise_dt: Optional[float] = Field(
        default=None,
        gt=0,
        description="Resolution of the noise streams; dt must be a multiple of it"
    )

    @model_validator(mode="after")
    def check_times(self) -> "SimConfig":
        if self.T < self.t0:
            raise ValueError(f"T={self.T} is before t0={self.t0}")
        if self.interaction == InteractionMode.FROZEN and self.frozen_flow is None:
            raise ValueError("frozen interaction needs a frozen_flow")
        if self.noise_dt is not None:
            r = int(round(self.dt / self.noise_dt))
            if r < 1 or abs(r * self.noise_dt - self.dt) > GRID_TOLERANCE * self.dt:
                raise ValueError(f"dt={self.dt} is not a multiple of noise_dt={self.noise_dt}")
        return self

    def grid_step(self, t: float) -> int:
        """Absolute step index k with k * dt = t; GridError when t is not a grid point."""
        k = int(round(t / self.dt))
        if abs(k * self.dt - t) > GRID_TOLERANCE * max(1.0, abs(t)):
            raise GridError(f"time {t!r} is not a multiple of dt={self.dt!r}")
        return k

    def step_range(self) -> Tuple[int, int]:
        return self.grid_step(self.t0), self.grid_step(self.T)

    @property
    def substeps(self) -> int:
        """Noise slots per step; runs sharing noise_dt draw from the same fine-grid streams."""
        return 1 if self.noise_dt is None else int(round(self.dt / self.noise_dt))

    def updated(self, **changes) -> "SimConfig":
        """Validated copy with some fields replaced."""
        data = {name: getattr(self, name) for name in type(self).model_fields}
        data.update(changes)
        return SimConfig(**data)

    def interaction_at(self, t: float) -> AtomicMeasure:
        flow = self.frozen_flow
        return flow if isinstance(flow, AtomicMeasure) else flow(t)

    def describe(self) -> Dict[str, object]:
        return {
            "t0": self.t0,
            "T": self.T,
            "dt": self.dt,
            "replicas": self.replicas,
            "seed": self.seed,
            "interaction": self.interaction.value,
            "record_stride": self.record_stride,
            "noise_dt": self.noise_dt,
        }


class BranchEvent(NamedTuple):
    """One accepted branching event; offspring 0 is a death."""
    time: float
    step: int
    replica: int
    parent: LabelPath
    offspring: int


class StepView(NamedTuple):
    """State handed to step observers at the left endpoint of a step."""
    step: int
    time: float
    replica: np.ndarray
    positions: np.ndarray
    measure: AtomicMeasure
    actions: np.ndarray


class Snapshot(NamedTuple):
    """Population at one recorded grid time, replica-major."""
    step: int
    time: float
    replica: np.ndarray
    label_id: np.ndarray
    positions: np.ndarray


class LabelRegistry:
    """Interned label paths with their stream hashes."""

    def __init__(self):
        self.paths: List[LabelPath] = []
        self._index: Dict[LabelPath, int] = {}
        self._hashes = np.zeros(256, dtype=np.uint64)

    def __len__(self) -> int:
        return len(self.paths)

    @property
    def hashes(self) -> np.ndarray:
        return self._hashes[:len(self.paths)]

    def _store(self, path: LabelPath, value: np.uint64) -> int:
        found = self._index.get(path)
        if found is not None:
            return found
        idx = len(self.paths)
        if idx == self._hashes.size:
            self._hashes = np.concatenate([self._hashes, np.zeros(idx, dtype=np.uint64)])
        self._hashes[idx] = value
        self.paths.append(path)
        self._index[path] = idx
        return idx

    def intern(self, path: LabelPath) -> int:
        found = self._index.get(path)
        if found is not None:
            return found
        return self._store(path, label_hash(path))

    def child(self, parent_id: int, i: int) -> int:
        path = self.paths[parent_id] + (i,)
        found = self._index.get(path)
        if found is not None:
            return found
        value = child_hash(self._hashes[parent_id:parent_id + 1], np.array([i], dtype=np.int64))[0]
        return self._store(path, value)


class PopulationPath:
    """
    Recorded trajectory of all replicas: snapshots on the recording grid,
    the event log, running suprema per replica and the declared model
    constants needed by the moment checks.
    """

    def __init__(self, cfg: SimConfig, dim: int, registry: LabelRegistry, model_bounds: Dict[str, float]):
        self.cfg = cfg
        self.dim = dim
        self.registry = registry
        self.model_bounds = model_bounds
        self.snapshots: List[Snapshot] = []
        self.events: List[BranchEvent] = []
        self.sup_count = np.zeros(cfg.replicas, dtype=np.int64)
        self.sup_count_sq = np.zeros(cfg.replicas, dtype=np.int64)
        self.sup_abs_sum = np.zeros(cfg.replicas)
        self.stats: Optional[SimulationStats] = None

    # ------------------------------------------------------------------
    # Recording

    def record(self, step: int, replica: np.ndarray, label_id: np.ndarray, positions: np.ndarray) -> None:
        self.snapshots.append(Snapshot(
            step=step,
            time=step * self.cfg.dt,
            replica=replica.astype(np.int32),
            label_id=label_id.astype(np.int32),
            positions=positions.copy(),
        ))

    def track(self, replica: np.ndarray, positions: np.ndarray) -> None:
        counts = np.bincount(replica, minlength=self.cfg.replicas)
        np.maximum(self.sup_count, counts, out=self.sup_count)
        np.maximum(self.sup_count_sq, counts ** 2, out=self.sup_count_sq)
        sums = np.bincount(replica, weights=np.linalg.norm(positions, axis=1), minlength=self.cfg.replicas)
        np.maximum(self.sup_abs_sum, sums, out=self.sup_abs_sum)

    # ------------------------------------------------------------------
    # Access

    @property
    def replicas(self) -> int:
        return self.cfg.replicas

    @property
    def times(self) -> np.ndarray:
        return np.array([snap.time for snap in self.snapshots])

    @property
    def steps(self) -> np.ndarray:
        return np.array([snap.step for snap in self.snapshots], dtype=np.int64)

    def index_of(self, s: float) -> int:
        """Snapshot index of grid time s; GridError if s is off-grid or not recorded."""
        k = self.cfg.grid_step(s)
        steps = self.steps
        pos = int(np.searchsorted(steps, k))
        if pos >= steps.size or steps[pos] != k:
            raise GridError(f"time {s!r} is not a recorded grid time (stride {self.cfg.record_stride})")
        return pos

    def counts(self, i: int) -> np.ndarray:
        """Particle count per replica at snapshot i."""
        return np.bincount(self.snapshots[i].replica, minlength=self.replicas)

    def keys(self, i: int) -> np.ndarray:
        """(replica, label) identities of the particles of snapshot i."""
        snap = self.snapshots[i]
        return pair_keys(snap.replica, self.registry.hashes[snap.label_id])

    def measure(self, i: int) -> AtomicMeasure:
        """Replica-averaged spatial marginal at snapshot i."""
        snap = self.snapshots[i]
        n = snap.positions.shape[0]
        return AtomicMeasure(positions=snap.positions, weights=np.full(n, 1.0 / self.replicas), dim=self.dim)

    def state(self, i: int) -> InitialState:
        snap = self.snapshots[i]
        paths = [self.registry.paths[j] for j in snap.label_id.tolist()]
        return InitialState(snap.replica.astype(np.int64), paths, snap.positions.copy())

    def configuration(self, i: int, replica: int) -> Configuration:
        snap = self.snapshots[i]
        mask = snap.replica == replica
        items = [
            (Label(path=self.registry.paths[j]), x)
            for j, x in zip(snap.label_id[mask].tolist(), snap.positions[mask])
        ]
        return Configuration.from_items(items, dim=self.dim)

    def configurations(self, i: int) -> List[Configuration]:
        return self.state(i).configurations(self.replicas, self.dim)

    def restart_law(self, s: float) -> FixedLaw:
        """Law replaying the reached per-replica configurations at s, particle order included."""
        return FixedLaw(self.state(self.index_of(s)), self.replicas, self.dim)

    def initial_counts(self) -> np.ndarray:
        return self.counts(0)

    # ------------------------------------------------------------------
    # Tables

    def particle_table(self) -> pd.DataFrame:
        """Rows (time, replica, label, x1..xd) over all snapshots."""
        frames = []
        for snap in self.snapshots:
            frame = pd.DataFrame(snap.positions, columns=[f"x{j + 1}" for j in range(self.dim)])
            frame.insert(0, "label", [
                ".".join(map(str, self.registry.paths[j])) or "∅" for j in snap.label_id.tolist()
            ])
            frame.insert(0, "replica", snap.replica)
            frame.insert(0, "time", snap.time)
            frames.append(frame)
        return pd.concat(frames, ignore_index=True)

    def moment_table(self) -> pd.DataFrame:
        """Rows (time, mass, first moment per axis) of the mean measure."""
        rows = []
        for i, snap in enumerate(self.snapshots):
            m = self.measure(i)
            row = {"time": snap.time, "mass": m.total_mass}
            row.update({f"m{j + 1}": float(v) for j, v in enumerate(m.first_moment)})
            rows.append(row)
        return pd.DataFrame(rows)

    def summary(self) -> Dict[str, object]:
        return {
            "config": self.cfg.describe(),
            "stats": self.stats.model_dump() if self.stats else {},
            "times": self.times.tolist(),
            "mass": [self.measure(i).total_mass for i in range(len(self.snapshots))],
        }


def _interaction(cfg: SimConfig, t: float, positions: np.ndarray, dim: int) -> AtomicMeasure:
    if cfg.interaction == InteractionMode.FROZEN:
        return cfg.interaction_at(t)
    n = positions.shape[0]
    return AtomicMeasure(positions=positions, weights=np.full(n, 1.0 / cfg.replicas), dim=dim)


def _select_offspring(pmf: np.ndarray, z2: np.ndarray) -> np.ndarray:
    """l with z2 in I_l = [p_0 + .. + p_{l-1}, p_0 + .. + p_l)."""
    cumulative = np.cumsum(pmf, axis=1)
    cumulative = cumulative / cumulative[:, -1:]
    return np.sum(cumulative <= z2[:, None], axis=1)


def simulate(
    model: ModelSpec,
    policy,
    init: InitialLaw,
    cfg: SimConfig,
    observer: Optional[Callable[[StepView], None]] = None
) -> PopulationPath:
    """
    Simulate all replicas from t0 to T.

    Args:
        model: Coefficient bundle
        policy: Closed-loop policy (anything with ``act(t, x)``)
        init: Initial law
        cfg: Run parameters
        observer: Called once per step with the pre-step state

    Returns:
        PopulationPath with snapshots every ``cfg.record_stride`` steps
    """
    if init.dim != model.dim:
        raise DimensionError(f"dimension: initial law of d={init.dim} for a model of d={model.dim}")
    if getattr(policy, "state_dim", model.dim) != model.dim:
        raise DimensionError(f"dimension: policy for d={policy.state_dim} with a model of d={model.dim}")
    if getattr(policy, "action_dim", model.action_dim) != model.action_dim:
        raise DimensionError(
            f"dimension: policy with {policy.action_dim} actions for a model expecting {model.action_dim}"
        )
    if cfg.dt * model.gamma_bar >= 1.0:
        raise ConfigError(f"dt * gamma_bar = {cfg.dt * model.gamma_bar:.6g} must be below 1 for thinning")
    k_start, k_end = cfg.step_range()
    dim, dt, seed, replicas = model.dim, cfg.dt, cfg.seed, cfg.replicas
    substeps = cfg.substeps
    sqrt_dt = np.sqrt(dt)
    slot_dt = dt / substeps

    state = init.initial_state(replicas, seed)
    replica = np.asarray(state.replica, dtype=np.int64)
    if replica.size and (replica.min() < 0 or replica.max() >= replicas or np.any(np.diff(replica) < 0)):
        raise ConfigError("initial law must return replica-major particles within range")
    registry = LabelRegistry()
    label_id = np.array([registry.intern(p) for p in state.paths], dtype=np.int64)
    x = np.asarray(state.positions, dtype=float).reshape(-1, dim)

    path = PopulationPath(cfg, dim, registry, {"gamma_bar": model.gamma_bar, "M1": model.M1, "M2": model.M2})
    path.record(k_start, replica, label_id, x)
    path.track(replica, x)
    logger.info(
        f"Simulating '{model.name}': steps {k_start}..{k_end}, dt={dt}, M={replicas}, "
        f"{x.shape[0]} initial particles"
    )

    births = deaths = 0
    max_population = x.shape[0]
    for k in range(k_start, k_end):
        t = k * dt
        m = _interaction(cfg, t, x, dim)
        actions = policy.act(t, x) if x.shape[0] else np.zeros((0, model.action_dim))
        if observer is not None:
            observer(StepView(k, t, replica, x, m, actions))
        if x.shape[0]:
            drift = model.eval_drift(t, x, m, actions)
            diffusion = model.eval_diffusion(t, x, m, actions)
            rate = model.eval_rate(t, x, m, actions)
            pmf = model.eval_offspring(t, x, m, actions)

            hashes = registry.hashes[label_id]
            slots = range(k * substeps, (k + 1) * substeps)
            noise = sum(normals(stream_keys(seed, replica, hashes, Channel.MOTION, j), dim) for j in slots)
            noise = noise / np.sqrt(substeps)
            x_next = x + drift * dt + np.einsum("nij,nj->ni", diffusion, noise) * sqrt_dt
            if not np.all(np.isfinite(x_next)):
                bad = int(np.nonzero(~np.all(np.isfinite(x_next), axis=1))[0][0])
                report = {
                    "step": k + 1,
                    "time": (k + 1) * dt,
                    "replica": int(replica[bad]),
                    "label": ".".join(map(str, registry.paths[label_id[bad]])) or "∅",
                }
                logger.error(f"Non-finite position at step {k + 1}: {report}")
                raise NumericalError(f"non-finite position at step {k + 1} (t={(k + 1) * dt:.6g})", report)

            # first accepted candidate slot of the step, -1 for none
            slot = np.full(x.shape[0], -1, dtype=np.int64)
            for j in slots:
                u = uniforms(stream_keys(seed, replica, hashes, Channel.EVENT, j), 2)
                fresh = (slot < 0) & (u[:, 0] < model.gamma_bar * slot_dt) & (u[:, 1] * model.gamma_bar < rate)
                slot[fresh] = j
            accepted = np.nonzero(slot >= 0)[0]
            x = x_next
            if accepted.size:
                z2 = np.empty(accepted.size)
                for j in np.unique(slot[accepted]).tolist():
                    sel = slot[accepted] == j
                    rows = accepted[sel]
                    z2[sel] = uniforms(stream_keys(seed, replica[rows], hashes[rows], Channel.OFFSPRING, j), 1)[:, 0]
                offspring = _select_offspring(pmf[accepted], z2)
                counts = np.ones(x.shape[0], dtype=np.int64)
                counts[accepted] = offspring
                starts = np.cumsum(counts) - counts
                new_ids = np.repeat(label_id, counts)
                for i, n_children in zip(accepted.tolist(), offspring.tolist()):
                    parent = int(label_id[i])
                    path.events.append(BranchEvent(
                        time=(k + 1) * dt,
                        step=k + 1,
                        replica=int(replica[i]),
                        parent=registry.paths[parent],
                        offspring=int(n_children),
                    ))
                    if n_children == 0:
                        deaths += 1
                        continue
                    births += 1
                    begin = starts[i]
                    new_ids[begin:begin + n_children] = [registry.child(parent, c) for c in range(1, n_children + 1)]
                replica = np.repeat(replica, counts)
                x = np.repeat(x, counts, axis=0)
                label_id = new_ids

        path.track(replica, x)
        max_population = max(max_population, x.shape[0])
        done = k + 1 - k_start
        if done % cfg.record_stride == 0 or k + 1 == k_end:
            path.record(k + 1, replica, label_id, x)

    path.stats = SimulationStats(
        replicas=replicas,
        steps=k_end - k_start,
        t0=cfg.t0,
        T=cfg.T,
        dt=dt,
        seed=seed,
        initial_mean_count=float(path.counts(0).mean()),
        terminal_mean_count=float(path.counts(len(path.snapshots) - 1).mean()),
        branch_events=births,
        death_events=deaths,
        max_population=max_population,
    )
    logger.info(
        f"Finished '{model.name}': {births} branchings, {deaths} deaths, "
        f"terminal mean count {path.stats.terminal_mean_count:.4f}"
    )
    return path


def mean_measure(path: PopulationPath, s: float) -> AtomicMeasure:
    """Monte Carlo estimate of the mean measure at grid time s."""
    return path.measure(path.index_of(s))


def mean_functional(path: PopulationPath, s: float, phi: Callable[[np.ndarray], np.ndarray]) -> Tuple[float, float]:
    """
    Estimate <phi, mu_s> with its standard error across replicas.

    Returns:
        (estimate, stderr)
    """
    snap = path.snapshots[path.index_of(s)]
    values = np.asarray(phi(snap.positions), dtype=float).reshape(-1) if snap.positions.shape[0] else np.zeros(0)
    per_replica = np.bincount(snap.replica, weights=values, minlength=path.replicas)
    return mean_and_stderr(per_replica)


def mean_and_stderr(samples: np.ndarray) -> Tuple[float, float]:
    samples = np.asarray(samples, dtype=float)
    if samples.size < 2:
        return float(samples.mean()) if samples.size else 0.0, 0.0
    return float(samples.mean()), float(samples.std(ddof=1) / np.sqrt(samples.size))

"""
Builds runtime objects (model, cost, policy, initial law, run parameters)
from a resolved configuration.
"""

from typing import Optional

import numpy as np

from .config_parser import ResolvedConfig
from ..control.cost import CostSpec, build_cost
from ..control.policy import Policy, n_parameters
from ..control.value import SearchBudget, canonical_law
from ..dynamics.model import ModelSpec, build_model
from ..dynamics.samplers import DiracLaw, InitialLaw
from ..dynamics.simulator import InteractionMode, SimConfig
from ..measures.models import AtomicMeasure, Configuration
from ..storage.measure_io import read_measure
from ..utils.config import settings
from ..utils.errors import ConfigError
from ..utils.logger import setup_logger

logger = setup_logger(__name__)


def run_seed(cfg: ResolvedConfig, override: Optional[int] = None) -> int:
    """Command-line seed, else the file's [run] seed, else the settings default."""
    if override is not None:
        return override
    if cfg.run.seed is not None:
        return cfg.run.seed
    return settings.default_seed


def build_run_model(cfg: ResolvedConfig) -> ModelSpec:
    if cfg.model is None:
        raise ConfigError(f"'{cfg.command}' has no [model] section")
    return build_model(cfg.model.family, cfg.model.params)


def build_run_cost(cfg: ResolvedConfig) -> CostSpec:
    if cfg.cost is None:
        raise ConfigError(f"'{cfg.command}' has no [cost] section")
    return build_cost(cfg.cost.family, cfg.cost.params)


def build_run_policy(cfg: ResolvedConfig, model: ModelSpec) -> Policy:
    """Policy of the [policy] section; parameters default to zeros."""
    section = cfg.policy
    n = n_parameters(section.family, model.dim, model.action_dim)
    parameters = section.parameters if section.parameters is not None else [0.0] * n
    try:
        return Policy(
            family=section.family,
            state_dim=model.dim,
            action_dim=model.action_dim,
            parameters=tuple(parameters),
            action_low=tuple(section.action_low),
            action_high=tuple(section.action_high),
        )
    except ValueError as exc:
        raise ConfigError(f"[policy] {exc}") from exc


def load_initial_measure(cfg: ResolvedConfig, dim: int) -> AtomicMeasure:
    if cfg.initial is None:
        raise ConfigError(f"'{cfg.command}' has no [initial] section")
    return read_measure(cfg.resolve_path(cfg.initial.measure), dim=dim)


def build_initial_law(cfg: ResolvedConfig, nu: AtomicMeasure) -> InitialLaw:
    """xi from nu: rounded copies, Poisson random measure, or one deterministic configuration."""
    kind = cfg.initial.law
    if kind == "dirac":
        counts = nu.weights
        if any(abs(w - round(w)) > 1e-12 for w in counts):
            raise ConfigError("[initial] law = dirac needs integer atom weights")
        positions = [x for x, w in zip(nu.positions, counts) for _ in range(int(round(w)))]
        return DiracLaw(Configuration.from_positions(np.asarray(positions, dtype=float).reshape(-1, nu.dim)))
    return canonical_law(nu, kind)


def build_sim_config(cfg: ResolvedConfig, seed: int) -> SimConfig:
    run = cfg.run
    frozen = None
    if run.interaction == InteractionMode.FROZEN:
        if not run.frozen_measure:
            raise ConfigError("[run] interaction = frozen needs frozen_measure")
        frozen = read_measure(cfg.resolve_path(run.frozen_measure))
    try:
        return SimConfig(
            t0=run.t0,
            T=run.T,
            dt=run.dt,
            replicas=run.replicas,
            seed=seed,
            interaction=run.interaction,
            frozen_flow=frozen,
            record_stride=run.record_stride,
        )
    except ValueError as exc:
        raise ConfigError(f"[run] {exc}") from exc


def build_budget(cfg: ResolvedConfig) -> SearchBudget:
    s = cfg.search
    return SearchBudget(
        restarts=s.restarts,
        iterations=s.iterations,
        replicas=s.replicas,
        xatol=s.xatol,
        fatol=s.fatol,
        initial_step=s.initial_step,
        tolerance=s.tolerance,
    )

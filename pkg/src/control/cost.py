"""
Cost functional J(t, xi, alpha) and its Monte Carlo evaluation.

J = int_t^T <L(s, ., mu_s, alpha_s(.)), mu_s> ds + <g(., mu_T), mu_T>,
estimated with the replica average in place of mu and a left-endpoint sum on
the step grid.
"""

from typing import Any, Callable, Dict, List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from ..dynamics.model import ModelSpec
from ..dynamics.rng import Channel, philox_generator
from ..dynamics.samplers import InitialLaw
from ..dynamics.simulator import PopulationPath, SimConfig, StepView, simulate
from ..measures.models import AtomicMeasure
from ..utils.config import settings
from ..utils.errors import ConfigError, ModelBoundError
from ..utils.logger import setup_logger

logger = setup_logger(__name__)

# (t, X (N, d), m, A (N, n)) -> (N,)
RunningCost = Callable[[float, np.ndarray, AtomicMeasure, np.ndarray], np.ndarray]
# (X (N, d), m) -> (N,)
TerminalCost = Callable[[np.ndarray, AtomicMeasure], np.ndarray]

BOUND_SLACK = 1e-12


class CostSpec(BaseModel):
    """Running and terminal cost with declared bounds C_L, C_g."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    name: str = Field(default="custom")
    running: RunningCost = Field(..., description="L(t, x, m, a), vectorized over particles")
    terminal: TerminalCost = Field(..., description="g(x, m), vectorized over particles")
    running_bound: float = Field(..., ge=0, description="C_L with |L| <= C_L")
    terminal_bound: float = Field(..., ge=0, description="C_g with |g| <= C_g")
    lipschitz: Optional[float] = Field(default=None, ge=0, description="Declared L_L (metadata)")

    def eval_running(self, t: float, x: np.ndarray, m: AtomicMeasure, a: np.ndarray) -> np.ndarray:
        out = np.asarray(self.running(t, x, m, a), dtype=float).reshape(-1)
        if out.size and np.max(np.abs(out)) > self.running_bound + BOUND_SLACK:
            raise ModelBoundError(
                f"running cost {float(np.max(np.abs(out))):.6g} exceeds C_L={self.running_bound} at t={t}"
            )
        return out

    def eval_terminal(self, x: np.ndarray, m: AtomicMeasure) -> np.ndarray:
        out = np.asarray(self.terminal(x, m), dtype=float).reshape(-1)
        if out.size and np.max(np.abs(out)) > self.terminal_bound + BOUND_SLACK:
            raise ModelBoundError(
                f"terminal cost {float(np.max(np.abs(out))):.6g} exceeds C_g={self.terminal_bound}"
            )
        return out


def terminal_value(cost: CostSpec, nu: AtomicMeasure) -> float:
    """<g(., nu), nu>, the value function at the horizon."""
    if nu.n_atoms == 0:
        return 0.0
    return float(nu.weights @ cost.eval_terminal(nu.positions, nu))


class QuadraticCostParams(BaseModel):
    """
    L = c0 + c_a |a|^2 + c_x |x - target|^2 + c_m m(R^d)
    g = g0 + g_x |x - target|^2 + g_m m(R^d)
    """

    model_config = ConfigDict(extra="forbid")

    name: Optional[str] = None
    c0: float = 0.0
    c_a: float = 0.0
    c_x: float = 0.0
    c_m: float = 0.0
    g0: float = 0.0
    g_x: float = 0.0
    g_m: float = 0.0
    target: List[float] = Field(default_factory=lambda: [0.0])
    running_bound: float = Field(default=1e6, ge=0)
    terminal_bound: float = Field(default=1e6, ge=0)

    @field_validator("target", mode="before")
    @classmethod
    def listify(cls, v: Any) -> Any:
        if isinstance(v, (int, float)):
            return [float(v)]
        return v


def build_quadratic_cost(p: QuadraticCostParams) -> CostSpec:
    target = np.asarray(p.target, dtype=float)

    def gap(x: np.ndarray) -> np.ndarray:
        return np.sum((x - np.broadcast_to(target, (x.shape[1],))[None, :]) ** 2, axis=1)

    def running(t, x, m, a):
        return p.c0 + p.c_a * np.sum(a ** 2, axis=1) + p.c_x * gap(x) + p.c_m * m.total_mass

    def terminal(x, m):
        return p.g0 + p.g_x * gap(x) + p.g_m * m.total_mass

    return CostSpec(
        name=p.name or "quadratic",
        running=running,
        terminal=terminal,
        running_bound=p.running_bound,
        terminal_bound=p.terminal_bound,
    )


COST_FAMILIES = {
    "quadratic": (QuadraticCostParams, build_quadratic_cost),
}


def build_cost(family: str, params: Union[Dict[str, Any], BaseModel, None] = None) -> CostSpec:
    """Build a registered cost family from validated parameters."""
    if family not in COST_FAMILIES:
        raise ConfigError(f"unknown cost family '{family}' (known: {', '.join(sorted(COST_FAMILIES))})")
    schema, builder = COST_FAMILIES[family]
    if not isinstance(params, schema):
        params = schema(**(params or {}))
    return builder(params)


class CostEstimate(BaseModel):
    """Monte Carlo estimate of J with its replica-bootstrap standard error."""

    estimate: float
    stderr: float = Field(..., ge=0)
    running: float
    terminal: float
    replicas: int
    seed: int


def bootstrap_stderr(per_replica: np.ndarray, seed: int, resamples: Optional[int] = None) -> float:
    """Standard deviation of replica-resampled means."""
    per_replica = np.asarray(per_replica, dtype=float)
    if per_replica.size < 2:
        return 0.0
    resamples = resamples or settings.bootstrap_resamples
    rng = philox_generator(seed, int(Channel.BOOTSTRAP))
    picks = rng.integers(0, per_replica.size, size=(resamples, per_replica.size))
    return float(per_replica[picks].mean(axis=1).std(ddof=1))


class RunningCostMeter:
    """Step observer accumulating left-endpoint running cost per replica."""

    def __init__(self, cost: CostSpec, replicas: int, dt: float):
        self.cost = cost
        self.dt = dt
        self.per_replica = np.zeros(replicas)

    def __call__(self, view: StepView) -> None:
        if view.positions.shape[0] == 0:
            return
        values = self.cost.eval_running(view.time, view.positions, view.measure, view.actions)
        self.per_replica += self.dt * np.bincount(view.replica, weights=values, minlength=self.per_replica.size)


def run_cost(
    model: ModelSpec,
    policy,
    cost: CostSpec,
    init: InitialLaw,
    cfg: SimConfig,
    include_terminal: bool = True
) -> Tuple[np.ndarray, np.ndarray, PopulationPath]:
    """
    Simulate and return per-replica running and terminal contributions.

    The recording stride is widened so only the start and the horizon are kept.
    """
    k0, k1 = cfg.step_range()
    run_cfg = cfg.updated(record_stride=max(1, k1 - k0))
    meter = RunningCostMeter(cost, cfg.replicas, cfg.dt)
    path = simulate(model, policy, init, run_cfg, observer=meter)
    terminal = np.zeros(cfg.replicas)
    if include_terminal:
        last = len(path.snapshots) - 1
        snap = path.snapshots[last]
        if snap.positions.shape[0]:
            values = cost.eval_terminal(snap.positions, path.measure(last))
            terminal = np.bincount(snap.replica, weights=values, minlength=cfg.replicas)
    return meter.per_replica, terminal, path


def evaluate_cost(
    model: ModelSpec,
    policy,
    cost: CostSpec,
    init: InitialLaw,
    cfg: SimConfig,
    include_terminal: bool = True
) -> CostEstimate:
    """
    Estimate J(t0, xi, alpha) for the run described by ``cfg``.

    Args:
        model: Coefficient bundle
        policy: Closed-loop policy
        cost: Running and terminal cost
        init: Law of xi
        cfg: Run parameters (t0 is the starting time t)
        include_terminal: Drop the terminal term to get the running cost on [t0, T] only

    Returns:
        CostEstimate with a replica-bootstrap standard error
    """
    running, terminal, _ = run_cost(model, policy, cost, init, cfg, include_terminal)
    total = running + terminal
    return CostEstimate(
        estimate=float(total.mean()),
        stderr=bootstrap_stderr(total, cfg.seed),
        running=float(running.mean()),
        terminal=float(terminal.mean()),
        replicas=cfg.replicas,
        seed=cfg.seed,
    )

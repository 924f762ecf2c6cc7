"""
Value function approximation by derivative-free policy search, and checks of
the dynamic programming principle.

The search runs Nelder-Mead over the parameters of one policy family. Every
objective evaluation reuses the same master seed, so at fixed seed the
objective is a deterministic function of the parameters; restarts differ only
in their starting simplex.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field
from scipy.optimize import minimize

from .cost import CostSpec, evaluate_cost, run_cost, bootstrap_stderr, terminal_value
from .policy import Policy, PolicyFamily, embed_parameters, zero_policy
from ..dynamics.model import ModelSpec
from ..dynamics.rng import Channel, philox_generator
from ..dynamics.samplers import InitialLaw, PoissonizedLaw, RoundedLaw
from ..dynamics.simulator import SimConfig
from ..measures.models import AtomicMeasure
from ..storage.models import CheckReport
from ..utils.config import settings
from ..utils.errors import ConfigError
from ..utils.logger import setup_logger

logger = setup_logger(__name__)

SIGMA_LEVEL = 3.0


class SearchBudget(BaseModel):
    """Optimizer budget: restarts, simplex iterations and Monte Carlo replicas."""

    restarts: int = Field(default=3, ge=1)
    iterations: int = Field(default=200, ge=1)
    replicas: int = Field(default=1000, ge=1)
    xatol: float = Field(default=1e-6, gt=0)
    fatol: float = Field(default=1e-9, gt=0)
    initial_step: float = Field(default=0.25, gt=0, description="Simplex edge as a fraction of the parameter box")
    tolerance: float = Field(default=1e-6, ge=0, description="Absolute slack added to optimizer budgets")


class RestartTrace(BaseModel):
    """Outcome of one simplex run."""

    restart: int
    start: List[float]
    parameters: List[float]
    value: float
    iterations: int
    evaluations: int
    converged: bool
    simplex_diameter: float
    simplex_spread: float
    message: str = ""


class SearchResult(BaseModel):
    """Best point over all restarts."""

    value: float
    parameters: List[float]
    converged: bool
    simplex_diameter: float
    simplex_spread: float
    trace: List[RestartTrace]


class ValueResult(BaseModel):
    """Approximate value v(t, nu) over a policy family (an upper bound on v)."""

    t: float
    value: float
    stderr: float = 0.0
    best_policy: Policy
    converged: bool
    simplex_diameter: float = 0.0
    simplex_spread: float = 0.0
    crn_seed: int
    evaluations: int = 0
    trace: List[RestartTrace] = Field(default_factory=list)


def canonical_law(nu: AtomicMeasure, kind: str = "rounded") -> InitialLaw:
    """xi in Xi(t, nu): rounded copies of the atoms, or a Poisson random measure."""
    if kind == "rounded":
        return RoundedLaw(nu)
    if kind == "poissonized":
        return PoissonizedLaw(nu)
    raise ConfigError(f"unknown initial-law construction '{kind}'")


def default_template(model: ModelSpec, family: PolicyFamily, low: float = -1.0, high: float = 1.0) -> Policy:
    return zero_policy(
        family=family,
        state_dim=model.dim,
        action_dim=model.action_dim,
        action_low=(low,) * model.action_dim,
        action_high=(high,) * model.action_dim,
    )


def _initial_simplex(start: np.ndarray, low: np.ndarray, high: np.ndarray, fraction: float) -> np.ndarray:
    steps = fraction * np.maximum(high - low, 1e-3)
    simplex = np.tile(start, (start.size + 1, 1))
    for i in range(start.size):
        simplex[i + 1, i] += steps[i] if start[i] + steps[i] <= high[i] else -steps[i]
    return simplex


def _diameter(vertices: np.ndarray) -> float:
    gaps = vertices[:, None, :] - vertices[None, :, :]
    return float(np.max(np.linalg.norm(gaps, axis=2)))


def policy_search(
    objective: Callable[[np.ndarray], float],
    template: Policy,
    budget: SearchBudget,
    seed: int,
    start: Optional[Sequence[float]] = None,
) -> SearchResult:
    """
    Minimize ``objective`` over the parameters of ``template``'s family.

    Restart 0 starts from ``start`` (default all zeros); the others from
    points drawn uniformly in the parameter box. Restarts run on a thread
    pool of ``settings.threads`` workers and are merged in restart order.
    """
    low, high = template.parameter_box()
    n = low.size
    starts = [np.asarray(start, dtype=float) if start is not None else np.zeros(n)]
    rng = philox_generator(seed, int(Channel.RESTART))
    for _ in range(1, budget.restarts):
        starts.append(rng.uniform(low, high))

    def run(index: int) -> RestartTrace:
        cache: Dict[Tuple[float, ...], float] = {}

        def cached(theta: np.ndarray) -> float:
            key = tuple(float(v) for v in theta)
            if key not in cache:
                cache[key] = float(objective(np.asarray(key)))
            return cache[key]

        x0 = starts[index]
        res = minimize(
            cached,
            x0,
            method="Nelder-Mead",
            options={
                "maxiter": budget.iterations,
                "xatol": budget.xatol,
                "fatol": budget.fatol,
                "initial_simplex": _initial_simplex(x0, low, high, budget.initial_step),
            },
        )
        vertices, values = res.final_simplex
        trace = RestartTrace(
            restart=index,
            start=x0.tolist(),
            parameters=np.asarray(res.x, dtype=float).tolist(),
            value=float(res.fun),
            iterations=int(res.nit),
            evaluations=len(cache),
            converged=bool(res.success),
            simplex_diameter=_diameter(np.asarray(vertices)),
            simplex_spread=float(np.max(values) - np.min(values)),
            message=str(res.message),
        )
        logger.info(f"Restart {index}: value {trace.value:.8g} after {trace.iterations} iterations "
                    f"(converged={trace.converged})")
        return trace

    workers = max(1, min(settings.threads, budget.restarts))
    if workers == 1:
        traces = [run(i) for i in range(budget.restarts)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            traces = list(pool.map(run, range(budget.restarts)))

    best = min(traces, key=lambda tr: (tr.value, tr.restart))
    if not best.converged:
        logger.warning(f"Best restart {best.restart} did not converge: {best.message}")
    return SearchResult(
        value=best.value,
        parameters=best.parameters,
        converged=best.converged,
        simplex_diameter=best.simplex_diameter,
        simplex_spread=best.simplex_spread,
        trace=traces,
    )


def value_from_law(
    model: ModelSpec,
    cost: CostSpec,
    law: InitialLaw,
    t: float,
    template: Policy,
    budget: SearchBudget,
    cfg: SimConfig,
    start: Optional[Sequence[float]] = None,
) -> ValueResult:
    """Policy search for J(t, xi, .) with xi drawn from ``law``."""
    run_cfg = cfg.updated(t0=t, replicas=budget.replicas)

    def objective(theta: np.ndarray) -> float:
        return evaluate_cost(model, template.with_parameters(theta), cost, law, run_cfg).estimate

    result = policy_search(objective, template, budget, cfg.seed, start)
    best = template.with_parameters(result.parameters)
    final = evaluate_cost(model, best, cost, law, run_cfg)
    return ValueResult(
        t=t,
        value=result.value,
        stderr=final.stderr,
        best_policy=best,
        converged=result.converged,
        simplex_diameter=result.simplex_diameter,
        simplex_spread=result.simplex_spread,
        crn_seed=cfg.seed,
        evaluations=sum(tr.evaluations for tr in result.trace),
        trace=result.trace,
    )


def approximate_value(
    model: ModelSpec,
    cost: CostSpec,
    nu: AtomicMeasure,
    t: float,
    family: PolicyFamily,
    budget: SearchBudget,
    cfg: SimConfig,
    template: Optional[Policy] = None,
    law: str = "rounded",
    start: Optional[Sequence[float]] = None,
) -> ValueResult:
    """
    Approximate v(t, nu) = inf over the family of J(t, xi, alpha).

    Args:
        model: Coefficient bundle
        cost: Cost functional
        nu: Initial measure
        t: Starting time (grid point, at most cfg.T)
        family: Policy family searched
        budget: Restarts, iterations and replicas
        cfg: Horizon, step size and CRN seed
        template: Policy fixing the action box (defaults to [-1, 1]^n)
        law: Construction of xi from nu ("rounded" or "poissonized")
        start: Starting parameters of restart 0

    Returns:
        ValueResult; at t = T the terminal value <g(., nu), nu> without simulation
    """
    family = PolicyFamily(family)
    template = template or default_template(model, family)
    if template.family != family:
        template = embed_parameters(template, family)
    if t > cfg.T:
        raise ConfigError(f"t={t} is after the horizon T={cfg.T}")
    if cfg.grid_step(t) == cfg.grid_step(cfg.T):
        return ValueResult(
            t=t,
            value=terminal_value(cost, nu),
            best_policy=template,
            converged=True,
            crn_seed=cfg.seed,
        )
    logger.info(f"Approximating v({t}, nu) over '{family.value}' with {budget.restarts} restarts, "
                f"M={budget.replicas}")
    return value_from_law(model, cost, canonical_law(nu, law), t, template, budget, cfg, start)


def check_dpp(
    model: ModelSpec,
    cost: CostSpec,
    nu: AtomicMeasure,
    t: float,
    s: float,
    family: PolicyFamily,
    budget: SearchBudget,
    cfg: SimConfig,
    template: Optional[Policy] = None,
) -> CheckReport:
    """
    Compare v(t, nu) with inf over the family of the cost on [t, s] plus the
    value at s re-optimized from the reached configurations.
    """
    family = PolicyFamily(family)
    if not (t <= s <= cfg.T):
        raise ConfigError(f"split time s={s} must satisfy t={t} <= s <= T={cfg.T}")
    template = template or default_template(model, family)
    lhs = approximate_value(model, cost, nu, t, family, budget, cfg, template)
    values: Dict[str, object] = {"t": t, "s": s, "lhs": lhs.value, "lhs_stderr": lhs.stderr}

    if cfg.grid_step(s) == cfg.grid_step(t):
        values.update({"rhs": lhs.value, "rhs_stderr": lhs.stderr, "gap": 0.0})
        return CheckReport.verdict("dpp", True, values, {"eps_mc": 0.0, "eps_opt": 0.0},
                                   notes=["split at the starting time"])

    law = canonical_law(nu)
    head_cfg = cfg.updated(t0=t, T=s, replicas=budget.replicas)
    at_horizon = cfg.grid_step(s) == cfg.grid_step(cfg.T)

    def split_cost(theta: np.ndarray) -> Tuple[float, float, float]:
        policy = template.with_parameters(theta)
        running, terminal, path = run_cost(model, policy, cost, law, head_cfg, include_terminal=at_horizon)
        head = float((running + terminal).mean())
        head_se = bootstrap_stderr(running + terminal, cfg.seed)
        if at_horizon:
            return head, head_se, 0.0
        inner = value_from_law(model, cost, path.restart_law(s), s, template, budget, cfg)
        return head + inner.value, math.hypot(head_se, inner.stderr), inner.simplex_spread

    outer = policy_search(lambda theta: split_cost(theta)[0], template, budget, cfg.seed)
    rhs_value, rhs_se, inner_spread = split_cost(np.asarray(outer.parameters))
    gap = lhs.value - rhs_value
    eps_mc = SIGMA_LEVEL * math.hypot(lhs.stderr, rhs_se)
    eps_opt = lhs.simplex_spread + outer.simplex_spread + inner_spread + budget.tolerance
    ok = abs(gap) <= eps_mc + eps_opt
    values.update({
        "rhs": rhs_value,
        "rhs_stderr": rhs_se,
        "gap": gap,
        "lhs_parameters": list(lhs.best_policy.parameters),
        "rhs_parameters": outer.parameters,
        "lhs_converged": lhs.converged,
        "rhs_converged": outer.converged,
        "crn_seed": cfg.seed,
    })
    if not ok:
        logger.warning(f"DPP gap {gap:.6g} exceeds budget {eps_mc + eps_opt:.6g}")
    return CheckReport.verdict("dpp", ok, values, {"eps_mc": eps_mc, "eps_opt": eps_opt})


def check_policy_monotonicity(
    model: ModelSpec,
    cost: CostSpec,
    nu: AtomicMeasure,
    t: float,
    budget: SearchBudget,
    cfg: SimConfig,
    families: Sequence[PolicyFamily] = (PolicyFamily.CONSTANT, PolicyFamily.AFFINE_CLAMPED),
    template: Optional[Policy] = None,
) -> CheckReport:
    """
    Enlarging the family never increases the value. Each larger family starts
    its first restart from the previous optimum written in its parameters.
    """
    results: List[ValueResult] = []
    for family in families:
        family = PolicyFamily(family)
        start = None
        base = template
        if results:
            base = embed_parameters(results[-1].best_policy, family)
            start = base.parameters
        results.append(approximate_value(model, cost, nu, t, family, budget, cfg, base, start=start))
    values = {
        "families": [PolicyFamily(f).value for f in families],
        "values": [r.value for r in results],
        "stderrs": [r.stderr for r in results],
    }
    ok = True
    slack = []
    for small, large in zip(results, results[1:]):
        allowed = SIGMA_LEVEL * math.hypot(small.stderr, large.stderr) + budget.tolerance
        slack.append(allowed)
        ok = ok and large.value <= small.value + allowed
    return CheckReport.verdict("policy_monotonicity", ok, values, {"slack": max(slack) if slack else 0.0})


def check_value_continuity(
    model: ModelSpec,
    cost: CostSpec,
    nu: AtomicMeasure,
    t: float,
    z: Sequence[float],
    family: PolicyFamily,
    budget: SearchBudget,
    cfg: SimConfig,
    epsilons: Sequence[float] = (0.2, 0.1, 0.05),
    template: Optional[Policy] = None,
) -> CheckReport:
    """|v(t, nu) - v(t, nu + eps delta_z)| decreases as eps shrinks."""
    base = approximate_value(model, cost, nu, t, family, budget, cfg, template)
    gaps, errors = [], []
    for eps in epsilons:
        bumped = nu.add(AtomicMeasure.dirac(z, eps))
        other = approximate_value(model, cost, bumped, t, family, budget, cfg, template)
        gaps.append(abs(other.value - base.value))
        errors.append(SIGMA_LEVEL * math.hypot(base.stderr, other.stderr))
    ok = all(later <= earlier + err for earlier, later, err in zip(gaps, gaps[1:], errors[1:]))
    return CheckReport.verdict(
        "value_continuity",
        ok and all(math.isfinite(g) for g in gaps),
        {"epsilons": list(epsilons), "gaps": gaps, "base_value": base.value},
        {"mc": max(errors) if errors else 0.0},
    )


def check_xi_invariance(
    model: ModelSpec,
    policy: Policy,
    cost: CostSpec,
    nu: AtomicMeasure,
    cfg: SimConfig,
) -> CheckReport:
    """J(t, xi, alpha) agrees for two constructions of xi with the same mean measure nu."""
    rounded = evaluate_cost(model, policy, cost, canonical_law(nu, "rounded"), cfg)
    poissonized = evaluate_cost(model, policy, cost, canonical_law(nu, "poissonized"), cfg)
    gap = abs(rounded.estimate - poissonized.estimate)
    budget = SIGMA_LEVEL * math.hypot(rounded.stderr, poissonized.stderr)
    return CheckReport.verdict(
        "xi_invariance",
        gap <= budget + 1e-12,
        {"rounded": rounded.estimate, "poissonized": poissonized.estimate, "gap": gap},
        {"mc": budget},
    )

"""
Generator of the controlled branching dynamics on cylinder functionals, the
Hamiltonian of the HJB equation and the Ito-formula residual.
"""

import itertools
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .cylinder import CylinderFunctional, lfd, lfd_grad, lfd_hess
from ..control.cost import CostSpec, terminal_value
from ..dynamics.model import ModelSpec
from ..dynamics.rng import Channel, philox_generator
from ..dynamics.simulator import InteractionMode, PopulationPath
from ..measures.models import AtomicMeasure
from ..measures.operations import integrate
from ..storage.models import CheckReport
from ..utils.config import settings
from ..utils.errors import ConfigError, GridError
from ..utils.logger import setup_logger

logger = setup_logger(__name__)

SIGMA_LEVEL = 3.0

# x (n, d) -> (n, d) / (n, d, d) / (n,)
VectorField = Callable[[np.ndarray], np.ndarray]


def _integrand(
    model: ModelSpec,
    t: float,
    x: np.ndarray,
    m: AtomicMeasure,
    actions: np.ndarray,
    grad: np.ndarray,
    hess: np.ndarray,
    value: np.ndarray
) -> np.ndarray:
    """b . p + 1/2 Tr(sigma sigma^T q) + gamma sum (l - 1) p_l r at every point."""
    drift = model.eval_drift(t, x, m, actions)
    sigma = model.eval_diffusion(t, x, m, actions)
    covariance = np.einsum("nij,nkj->nik", sigma, sigma)
    branching = model.branching_mean(t, x, m, actions)
    return (
        np.einsum("nd,nd->n", drift, grad)
        + 0.5 * np.einsum("nij,nji->n", covariance, hess)
        + branching * value
    )


def generator_apply(model: ModelSpec, policy, F: CylinderFunctional, t: float, m: AtomicMeasure) -> float:
    """
    (L^alpha F)(t, m): the measure-derivative part of the generator, with actions
    alpha(t, x) evaluated at the atoms of m. The time derivative is not included.
    """
    if m.n_atoms == 0:
        return 0.0
    x = m.positions
    actions = policy.act(t, x)
    values = _integrand(
        model, t, x, m, actions,
        lfd_grad(F, t, m, x), lfd_hess(F, t, m, x), lfd(F, t, m, x)
    )
    return float(values @ m.weights)


class HamiltonianValue(BaseModel):
    """Grid minimum of the Hamiltonian with the minimizing constant action."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    value: float
    argmin: List[float]
    index: int
    grid_size: int


def hamiltonian_G(
    model: ModelSpec,
    cost: CostSpec,
    t: float,
    m: AtomicMeasure,
    p: VectorField,
    q: VectorField,
    r: VectorField,
    action_grid: np.ndarray
) -> HamiltonianValue:
    """
    G(t, m, p, q, r) = inf_a < L + b . p + 1/2 Tr(sigma sigma^T q) + gamma sum (l - 1) p_l r, m >
    over a finite set of constant actions. The grid minimum is never below the true infimum.
    """
    grid = np.asarray(action_grid, dtype=float)
    if grid.ndim == 1:
        grid = grid.reshape(-1, 1)
    if grid.shape[0] == 0:
        raise ConfigError("action grid is empty")
    if grid.shape[1] != model.action_dim:
        raise ConfigError(f"action grid of width {grid.shape[1]} for {model.action_dim} actions")
    x = m.positions
    n = x.shape[0]
    pv, qv, rv = (np.asarray(p(x), dtype=float), np.asarray(q(x), dtype=float), np.asarray(r(x), dtype=float))
    values = np.empty(grid.shape[0])
    for j, a in enumerate(grid):
        actions = np.broadcast_to(a, (n, model.action_dim))
        if n == 0:
            values[j] = 0.0
            continue
        running = cost.eval_running(t, x, m, actions)
        values[j] = float((running + _integrand(model, t, x, m, actions, pv, qv, rv)) @ m.weights)
    best = int(np.argmin(values))
    return HamiltonianValue(value=float(values[best]), argmin=grid[best].tolist(), index=best, grid_size=grid.shape[0])


def hjb_residual(
    model: ModelSpec,
    cost: CostSpec,
    F: CylinderFunctional,
    t: float,
    m: AtomicMeasure,
    action_grid: np.ndarray
) -> float:
    """d_t F(t, m) + G(t, m, grad dF/dm, Hess dF/dm, dF/dm)."""
    G = hamiltonian_G(
        model, cost, t, m,
        lambda x: lfd_grad(F, t, m, x),
        lambda x: lfd_hess(F, t, m, x),
        lambda x: lfd(F, t, m, x),
        action_grid,
    )
    return F.time_derivative(t, m) + G.value


def terminal_gap(cost: CostSpec, F: CylinderFunctional, T: float, m: AtomicMeasure) -> float:
    """F(T, m) - <g(., m), m>."""
    return F.value(T, m) - terminal_value(cost, m)


def hamiltonian_lipschitz_constant(model: ModelSpec, action_bound: float) -> float:
    """
    L_G = max(sup |b|, 1/2 sup |sigma|_F^2, gamma_bar max(1, M1)).

    Times 3 <1 + |x|, m> and the weighted distance of (p, q, r) it bounds
    |G(p, q, r) - G(p', q', r')|.
    """
    bounds = model.coefficient_bounds(action_bound)
    if bounds["b"] is None or bounds["sigma"] is None:
        raise ConfigError(f"model '{model.name}' declares no drift or diffusion bound")
    return max(bounds["b"], 0.5 * bounds["sigma"] ** 2, model.gamma_bar * max(1.0, model.M1))


def hamiltonian_lipschitz_check(
    model: ModelSpec,
    cost: CostSpec,
    t: float,
    m: AtomicMeasure,
    fields: List[Dict[str, VectorField]],
    action_grid: np.ndarray,
    action_bound: float
) -> CheckReport:
    """
    |G(f_i) - G(f_j)| <= 3 L_G <1 + |x|, m> max(|p - p'|_w, |q - q'|_w, |r - r'|_w) for every
    pair, where |h|_w = sup_x |h(x)| / (1 + |x|) over the atoms of m.
    """
    L_G = hamiltonian_lipschitz_constant(model, action_bound)
    x = m.positions
    weight = 1.0 + np.linalg.norm(x, axis=1)
    mass_weight = float(weight @ m.weights)
    G = [hamiltonian_G(model, cost, t, m, f["p"], f["q"], f["r"], action_grid).value for f in fields]

    def norm(h: np.ndarray) -> float:
        h = h.reshape(h.shape[0], -1)
        return float(np.max(np.linalg.norm(h, axis=1) / weight)) if h.size else 0.0

    worst = 0.0
    for i in range(len(fields)):
        for j in range(i + 1, len(fields)):
            eta = max(norm(np.asarray(fields[i][k](x)) - np.asarray(fields[j][k](x))) for k in ("p", "q", "r"))
            bound = 3.0 * L_G * mass_weight * eta
            gap = abs(G[i] - G[j])
            worst = max(worst, gap - bound)
    return CheckReport.verdict(
        "hamiltonian_lipschitz",
        worst <= 1e-10,
        {"G": G, "L_G": L_G, "weighted_mass": mass_weight, "worst_excess": worst},
    )


class ItoResidual(BaseModel):
    """Residual of the Ito formula over [s, t] on a simulated path."""

    residual: float
    stderr: float
    C_F: float = Field(..., description="Regularity constant of u -> d_t F + L^alpha F from declared bounds")
    dt: float
    budget: float
    start: float
    end: float

    @property
    def within_budget(self) -> bool:
        return abs(self.residual) <= self.budget


def _per_replica(values: np.ndarray, replica: np.ndarray, replicas: int) -> np.ndarray:
    """Column sums per replica, (N, K) -> (M, K)."""
    return np.stack(
        [np.bincount(replica, weights=values[:, k], minlength=replicas) for k in range(values.shape[1])],
        axis=1,
    )


def _envelope_constants(model: ModelSpec, policy, F: CylinderFunctional) -> Dict[str, object]:
    """Rates and field growths of the declared coefficient bounds, shared by every inner function."""
    action_bound = getattr(policy, "action_bound", None)
    if action_bound is None:
        raise ConfigError("policy declares no action bound")
    envelope = model.drift_envelope(action_bound)
    if envelope is None or model.diffusion_bound is None:
        raise ConfigError(f"model '{model.name}' declares no drift growth or diffusion bound")
    b0, b1 = envelope
    S2 = model.diffusion_bound ** 2
    branching = model.gamma_bar * max(1.0, model.M1 - 1.0)
    growths = []
    for phi in F.inner:
        if phi.grad_growth is None or phi.hess_growth is None:
            raise ConfigError(f"inner function '{phi.name}' declares no derivative growth")
        if phi.grad_order + (1 if b1 > 0 else 0) > 2:
            raise ConfigError(f"b . grad {phi.name} grows faster than (1 + |x|)^2")
        # |L phi| <= A (1 + |x|)^2
        growths.append(phi.grad_growth * (b0 + b1) + 0.5 * S2 * phi.hess_growth + branching * phi.growth)
    return {
        # d/du <1 + |x|^2, mu_u> <= kappa <1 + |x|^2, mu_u>
        "kappa": b0 + 2.0 * b1 + S2 + model.gamma_bar * max(model.M1 - 1.0, 0.0),
        # d/du <L phi, mu_u> <= rate * sup <|L phi|, mu_u>
        "rate": b0 + b1 + S2 + model.gamma_bar * max(1.0, model.M1),
        "growths": np.array(growths),
        "values": np.array([phi.growth for phi in F.inner]),
    }


def ito_constant(
    model: ModelSpec,
    policy,
    F: CylinderFunctional,
    start: AtomicMeasure,
    t0: float,
    s: float,
    t: float
) -> float:
    """
    C_F = sup |h| + (t - s) sup |dh/du| for h(u) = (d_t F + L F)(u, mu_u) on [s, t].

    Built from the declared bounds on b, sigma, gamma and p, the growth
    certificates of phi_k and their derivatives, and the partial derivatives
    of f over the moment box the flow from ``start`` (at t0) cannot leave.
    Nothing here looks at the simulated replicas beyond the start measure.
    """
    const = _envelope_constants(model, policy, F)
    V = float(integrate(start, lambda x: 1.0 + np.sum(x ** 2, axis=1))) * np.exp(const["kappa"] * (t - t0))
    # <(1 + |x|)^q, mu> <= 2 <1 + |x|^2, mu> for q <= 2
    Y = 2.0 * const["values"] * V
    G = 2.0 * const["growths"] * V

    h = 1e-4 * max(1.0, t - s)
    times = (s, 0.5 * (s + t), t)
    corners = itertools.product(*[(-y, 0.0, y) for y in Y])
    f_t = f_tt = 0.0
    f_y, f_ty, f_yy = np.zeros(Y.size), np.zeros(Y.size), np.zeros((Y.size, Y.size))
    for y in corners:
        y = np.asarray(y, dtype=float)
        for u in times:
            f_t = max(f_t, abs(float(F.d_t(u, y))))
            f_tt = max(f_tt, abs(float(F.d_t(u + h, y)) - float(F.d_t(u - h, y))) / (2.0 * h))
            f_y = np.maximum(f_y, np.abs(np.asarray(F.d_y(u, y), dtype=float)))
            f_ty = np.maximum(f_ty, np.abs(np.asarray(F.d_y(u + h, y)) - np.asarray(F.d_y(u - h, y))) / (2.0 * h))
            f_yy = np.maximum(f_yy, np.abs(np.asarray(F.d_yy(u, y), dtype=float)))

    sup_h = f_t + float(f_y @ G)
    sup_dh = f_tt + 2.0 * float(f_ty @ G) + float(G @ f_yy @ G) + const["rate"] * float(f_y @ G)
    return sup_h + (t - s) * sup_dh


def ito_residual(
    model: ModelSpec,
    policy,
    F: CylinderFunctional,
    path: PopulationPath,
    s: float,
    t: float,
    resamples: Optional[int] = None
) -> ItoResidual:
    """
    R = F(t, mu_t) - F(s, mu_s) - sum_{u in [s, t)} (d_t F + L^alpha F)(u, mu_u) dt.

    The path must be recorded at every step of [s, t] and simulated with
    ``policy``. The standard error resamples replicas; since F depends on the
    measure only through its moments <phi_i, mu>, each resample reuses the
    per-replica moment sums.

    C_F comes from the declared bounds (see ``ito_constant``), so the O(dt)
    allowance does not move with the number of replicas.
    """
    i_s, i_t = path.index_of(s), path.index_of(t)
    steps = path.steps[i_s:i_t + 1]
    if i_t < i_s or np.any(np.diff(steps) != 1):
        raise GridError(f"Ito residual needs a stride-1 path between {s} and {t}")
    M, dt = path.replicas, path.cfg.dt
    resamples = resamples or settings.bootstrap_resamples
    rng = philox_generator(path.cfg.seed, int(Channel.BOOTSTRAP))
    picks = rng.integers(0, M, size=(resamples, M))
    W = np.stack([np.bincount(row, minlength=M) for row in picks]).astype(float) / M

    def moment_sums(i: int):
        snap = path.snapshots[i]
        x = snap.positions
        if x.shape[0] == 0:
            return np.zeros((M, len(F.inner))), np.zeros((M, len(F.inner)))
        u = snap.time
        mu = path.measure(i)
        m = path.cfg.interaction_at(u) if path.cfg.interaction == InteractionMode.FROZEN else mu
        actions = policy.act(u, x)
        phi = F.inner_values(x)
        grads, hessians = F.inner_grads(x), F.inner_hessians(x)
        generated = np.stack([
            _integrand(model, u, x, m, actions, grads[:, k], hessians[:, k], phi[:, k])
            for k in range(len(F.inner))
        ], axis=1)
        return _per_replica(phi, snap.replica, M), _per_replica(generated, snap.replica, M)

    def outer(u: float, y: np.ndarray) -> float:
        return float(F.outer(u, y))

    def rate(u: float, y: np.ndarray, g: np.ndarray) -> float:
        return float(F.d_t(u, y)) + float(np.asarray(F.d_y(u, y)) @ g)

    integral, integral_boot = 0.0, np.zeros(resamples)
    for i in range(i_s, i_t):
        u = path.snapshots[i].time
        s_phi, s_gen = moment_sums(i)
        y, g = s_phi.mean(axis=0), s_gen.mean(axis=0)
        y_b, g_b = W @ s_phi, W @ s_gen
        integral += rate(u, y, g) * dt
        integral_boot += dt * np.array([rate(u, y_b[b], g_b[b]) for b in range(resamples)])

    end_phi, _ = moment_sums(i_t)
    start_phi, _ = moment_sums(i_s)
    residual = outer(t, end_phi.mean(axis=0)) - outer(s, start_phi.mean(axis=0)) - integral
    end_b, start_b = W @ end_phi, W @ start_phi
    residual_boot = np.array([
        outer(t, end_b[b]) - outer(s, start_b[b]) for b in range(resamples)
    ]) - integral_boot
    stderr = float(residual_boot.std(ddof=1)) if resamples > 1 else 0.0

    C_F = ito_constant(model, policy, F, path.measure(0), path.snapshots[0].time, s, t)
    budget = SIGMA_LEVEL * stderr + C_F * dt
    logger.debug(f"Ito residual on [{s}, {t}] for {F.name}: R={residual:.3e}, se={stderr:.3e}, C_F={C_F:.3e}")
    return ItoResidual(residual=residual, stderr=stderr, C_F=C_F, dt=dt, budget=budget, start=s, end=t)


def check_ito(model: ModelSpec, policy, F: CylinderFunctional, path: PopulationPath, s: float, t: float) -> CheckReport:
    """|R| <= 3 stderr + C_F dt."""
    result = ito_residual(model, policy, F, path, s, t)
    return CheckReport.verdict(
        "ito_residual",
        result.within_budget,
        result.model_dump(),
        {"sigma_level": SIGMA_LEVEL, "budget": result.budget},
    )


def check_ito_halving(
    residuals: Sequence[float],
    dts: Sequence[float],
    tolerance: float = 0.15,
    common_noise: bool = False,
    floor: float = 1e-12
) -> CheckReport:
    """
    Systematic residuals on dt, dt/2, dt/4, ... shrink by about one half at each
    halving; parts already at round-off count as converged.

    With ``common_noise`` the residuals come from runs sharing one noise
    realisation (``SimConfig.noise_dt``) and the systematic part at dt_i is
    R(dt_i) - R(dt_{i+1}), in which the Monte Carlo part cancels.
    """
    parts = [float(r) for r in residuals]
    if common_noise:
        parts = [r0 - r1 for r0, r1 in zip(parts, parts[1:])]
    ratios, stalled = [], False
    for p0, p1 in zip(parts, parts[1:]):
        if abs(p0) <= floor:
            stalled = stalled or abs(p1) > floor
            continue
        ratios.append(abs(p1) / abs(p0))
    ok = not stalled and all(abs(q - 0.5) <= tolerance for q in ratios)
    return CheckReport.verdict(
        "ito_halving",
        ok,
        {"residuals": [float(r) for r in residuals], "systematic": parts, "dt": list(dts), "ratios": ratios},
        {"tolerance": tolerance, "floor": floor},
    )

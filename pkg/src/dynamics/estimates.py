"""
Monte Carlo checks of the a-priori estimates satisfied by the branching
dynamics: moment bounds, position sums, stability under perturbation of the
initial condition and Hoelder-1/2 continuity in time.
"""

import math
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .samplers import CoupledLaw
from .simulator import PopulationPath, SimConfig, mean_and_stderr, simulate
from ..metrics.wasserstein import truncated_w1
from ..storage.models import CheckReport, CheckStatus
from ..utils.errors import CouplingError
from ..utils.logger import setup_logger

logger = setup_logger(__name__)

SIGMA_LEVEL = 3.0


def _vacuous(name: str, note: str, values: Optional[Dict] = None) -> CheckReport:
    return CheckReport(name=name, status=CheckStatus.VACUOUS, values=values or {}, notes=[note])


def _horizon(path: PopulationPath) -> float:
    return path.cfg.T - path.cfg.t0


def first_moment_bound(path: PopulationPath) -> float:
    """E<xi, 1> exp(gamma_bar M1 (T - t))."""
    b = path.model_bounds
    return float(path.initial_counts().mean()) * math.exp(b["gamma_bar"] * b["M1"] * _horizon(path))


def second_moment_bound(path: PopulationPath) -> float:
    """3 (E<xi,1>^2 + (T-t) gamma_bar M2 e^{gamma_bar M1 (T-t)} E<xi,1>) e^{3 (T-t)^2 gamma_bar^2 M1^2}."""
    b = path.model_bounds
    tau = _horizon(path)
    counts = path.initial_counts().astype(float)
    mean, mean_sq = float(counts.mean()), float((counts ** 2).mean())
    growth = math.exp(b["gamma_bar"] * b["M1"] * tau)
    inner = mean_sq + tau * b["gamma_bar"] * b["M2"] * growth * mean
    return 3.0 * inner * math.exp(3.0 * tau ** 2 * b["gamma_bar"] ** 2 * b["M1"] ** 2)


def check_first_moment_bound(path: PopulationPath) -> CheckReport:
    """MC estimate of E[sup_s #K_s] against the first-moment bound."""
    estimate, stderr = mean_and_stderr(path.sup_count)
    terminal, terminal_se = mean_and_stderr(path.counts(len(path.snapshots) - 1))
    bound = first_moment_bound(path)
    values = {
        "estimate": estimate,
        "stderr": stderr,
        "bound": bound,
        "terminal_mean_count": terminal,
        "terminal_stderr": terminal_se,
    }
    if path.initial_counts().sum() == 0:
        return _vacuous("first_moment_bound", "empty initial configuration", values)
    ok = estimate - SIGMA_LEVEL * stderr <= bound
    if not ok:
        logger.warning(f"First-moment bound violated: {estimate:.6g} +- {stderr:.3g} > {bound:.6g}")
    return CheckReport.verdict("first_moment_bound", ok, values, {"mc": SIGMA_LEVEL * stderr})


def check_second_moment_bound(path: PopulationPath) -> CheckReport:
    """MC estimate of E[(sup_s #K_s)^2] against the second-moment bound."""
    estimate, stderr = mean_and_stderr(path.sup_count_sq)
    bound = second_moment_bound(path)
    values = {"estimate": estimate, "stderr": stderr, "bound": bound}
    if path.initial_counts().sum() == 0:
        return _vacuous("second_moment_bound", "empty initial configuration", values)
    ok = estimate - SIGMA_LEVEL * stderr <= bound
    if not ok:
        logger.warning(f"Second-moment bound violated: {estimate:.6g} +- {stderr:.3g} > {bound:.6g}")
    return CheckReport.verdict("second_moment_bound", ok, values, {"mc": SIGMA_LEVEL * stderr})


def check_position_sum_bound(path: PopulationPath) -> CheckReport:
    """
    E[sup_s sum_k |X^k_s|]: finite, and stable when the number of replicas
    doubles (first half of the replicas against all of them).
    """
    samples = path.sup_abs_sum
    estimate, stderr = mean_and_stderr(samples)
    half = samples.size // 2
    values: Dict[str, object] = {"estimate": estimate, "stderr": stderr}
    if half < 2:
        values["finite"] = bool(np.isfinite(estimate))
        return CheckReport.verdict("position_sum_bound", bool(np.isfinite(estimate)), values,
                                   notes=["too few replicas for the doubling test"])
    first, first_se = mean_and_stderr(samples[:half])
    _, second_se = mean_and_stderr(samples[half:2 * half])
    full = float(samples[:2 * half].mean())
    joint = math.sqrt(first_se ** 2 + second_se ** 2) / 2.0
    change = abs(first - full)
    ok = bool(np.isfinite(estimate)) and change <= SIGMA_LEVEL * joint + 1e-12
    values.update({"half_estimate": first, "change": change, "joint_stderr": joint})
    return CheckReport.verdict("position_sum_bound", ok, values, {"doubling": SIGMA_LEVEL * joint})


# ----------------------------------------------------------------------
# Configuration distances between snapshots

def batch_d_E(path_a: PopulationPath, i: int, path_b: PopulationPath, j: int) -> np.ndarray:
    """d_E between replica r of snapshot i of path_a and replica r of snapshot j of path_b, for all r."""
    snap_a, snap_b = path_a.snapshots[i], path_b.snapshots[j]
    replicas = path_a.replicas
    keys_a, keys_b = path_a.keys(i), path_b.keys(j)
    _, ia, ib = np.intersect1d(keys_a, keys_b, assume_unique=True, return_indices=True)
    gaps = np.minimum(np.linalg.norm(snap_a.positions[ia] - snap_b.positions[ib], axis=1), 1.0)
    shared_rep = snap_a.replica[ia]
    motion = np.bincount(shared_rep, weights=gaps, minlength=replicas)
    shared = np.bincount(shared_rep, minlength=replicas)
    n_a = np.bincount(snap_a.replica, minlength=replicas)
    n_b = np.bincount(snap_b.replica, minlength=replicas)
    return motion + (n_a - shared) + (n_b - shared)


def check_path_stability(
    model,
    policy,
    pair_law: Callable[[float], CoupledLaw],
    cfg: SimConfig,
    epsilons: Sequence[float] = (0.1, 0.05, 0.01),
    seed_prime: Optional[int] = None,
    max_variation: float = 0.5,
) -> CheckReport:
    """
    Ratio E d_E(Z_T, Z'_T) / E d_E(xi, xi') and W1bar(mu_T, mu'_T) / W1bar(m, m')
    over a sweep of perturbation sizes; both ratios must stay bounded as the
    perturbation shrinks. Also checks W1bar(mu_s, mu'_s) <= 2 E d_E(Z_s, Z'_s)
    for the replica averages at the horizon.
    """
    if seed_prime is not None and seed_prime != cfg.seed:
        raise CouplingError(f"coupled runs use seeds {cfg.seed} and {seed_prime}")
    rows: List[Dict[str, float]] = []
    chain_ok = True
    for eps in epsilons:
        law = pair_law(eps)
        if not isinstance(law, CoupledLaw):
            raise CouplingError(f"perturbation {eps}: initial laws are not drawn on one probability space")
        first, second = law.pair_laws(cfg.replicas, cfg.seed)
        path_a = simulate(model, policy, first, cfg)
        path_b = simulate(model, policy, second, cfg)
        last = len(path_a.snapshots) - 1
        d_initial = batch_d_E(path_a, 0, path_b, 0)
        d_final = batch_d_E(path_a, last, path_b, last)
        w_initial = truncated_w1(path_a.measure(0), path_b.measure(0)).value
        w_final = truncated_w1(path_a.measure(last), path_b.measure(last)).value
        e_initial, e_final = float(d_initial.mean()), float(d_final.mean())
        _, final_se = mean_and_stderr(d_final)
        chain = w_final <= 2.0 * e_final + 1e-9
        chain_ok = chain_ok and chain
        rows.append({
            "epsilon": float(eps),
            "d_E_initial": e_initial,
            "d_E_final": e_final,
            "d_E_final_stderr": final_se,
            "w1_initial": w_initial,
            "w1_final": w_final,
            "d_E_ratio": e_final / e_initial if e_initial > 0 else float("nan"),
            "w1_ratio": w_final / w_initial if w_initial > 0 else float("nan"),
            "measure_chain_holds": chain,
        })
        logger.info(f"Stability sweep eps={eps}: d_E ratio {rows[-1]['d_E_ratio']:.4g}, "
                    f"W1 ratio {rows[-1]['w1_ratio']:.4g}")

    values: Dict[str, object] = {"sweep": rows}
    d_ratios = np.array([r["d_E_ratio"] for r in rows])
    w_ratios = np.array([r["w1_ratio"] for r in rows])
    usable = np.isfinite(d_ratios) & np.isfinite(w_ratios)
    if not usable.any():
        if all(r["d_E_final"] == 0 for r in rows):
            return _vacuous("path_stability", "identical coupled runs", values)
        return CheckReport.verdict("path_stability", False, values, notes=["zero initial distance"])

    def variation(ratios: np.ndarray) -> float:
        ratios = ratios[np.isfinite(ratios)]
        if ratios.size == 0 or ratios.min() <= 0:
            return 0.0 if ratios.size and ratios.max() == 0 else float("inf")
        return float(ratios.max() / ratios.min() - 1.0)

    eps = np.array([r["epsilon"] for r in rows])
    slope = float("nan")
    positive = usable & (d_ratios > 0)
    if positive.sum() >= 2:
        slope = float(np.polyfit(np.log(eps[positive]), np.log(d_ratios[positive]), 1)[0])
    values.update({
        "d_E_variation": variation(d_ratios),
        "w1_variation": variation(w_ratios),
        "log_slope": slope,
        "max_d_E_ratio": float(np.nanmax(d_ratios)),
    })
    ok = (
        values["d_E_variation"] < max_variation
        and values["w1_variation"] < max_variation
        and chain_ok
    )
    if not ok:
        logger.warning(f"Path stability check failed: {values}")
    return CheckReport.verdict("path_stability", ok, values, {"max_variation": max_variation})


def check_measure_stability(path_a: PopulationPath, path_b: PopulationPath, s: float) -> CheckReport:
    """W1bar(mu_s, mu'_s) <= 2 E d_E(Z_s, Z'_s) for two coupled runs at grid time s."""
    i, j = path_a.index_of(s), path_b.index_of(s)
    distances = batch_d_E(path_a, i, path_b, j)
    w1 = truncated_w1(path_a.measure(i), path_b.measure(j)).value
    expected = float(distances.mean())
    ok = w1 <= 2.0 * expected + 1e-9
    return CheckReport.verdict(
        "measure_stability",
        ok,
        {"w1": w1, "d_E_mean": expected, "bound": 2.0 * expected, "time": s},
    )


def time_continuity_curve(
    path: PopulationPath,
    max_lag: float = 0.1,
    max_base_times: int = 50
) -> Dict[str, List[float]]:
    """E d_E(Z_{r+h}, Z_r) over doubling lags h, averaged over base times r and replicas."""
    steps = path.steps
    if steps.size < 2:
        return {"h": [], "mean": [], "stderr": []}
    unit = int(steps[1] - steps[0])
    regular = int(np.sum(np.diff(steps) == unit)) + 1
    dt = path.cfg.dt
    lags, means, errors = [], [], []
    j = 1
    while j < regular and j * unit * dt <= max_lag * (1 + 1e-9):
        n_bases = min(max_base_times, regular - j)
        bases = np.unique(np.linspace(0, regular - 1 - j, n_bases).round().astype(int))
        per_replica = np.zeros(path.replicas)
        for i in bases:
            per_replica += batch_d_E(path, int(i), path, int(i) + j)
        per_replica /= bases.size
        mean, se = mean_and_stderr(per_replica)
        lags.append(j * unit * dt)
        means.append(mean)
        errors.append(se)
        j *= 2
    return {"h": lags, "mean": means, "stderr": errors}


def check_time_continuity(
    path: PopulationPath,
    max_lag: float = 0.1,
    max_base_times: int = 50,
    tolerance: float = 0.1
) -> CheckReport:
    """
    Fit E d_E(Z_{r+h}, Z_r) ~ C h^p over doubling lags. The sqrt(h) envelope
    holds when p >= 1/2 - tolerance; C = max E / sqrt(h) is reported.
    """
    curve = time_continuity_curve(path, max_lag, max_base_times)
    h = np.asarray(curve["h"])
    means = np.asarray(curve["mean"])
    values: Dict[str, object] = dict(curve)
    if h.size == 0:
        return _vacuous("time_continuity", "fewer than two snapshots", values)
    if np.all(means == 0):
        values.update({"exponent": None, "envelope_C": 0.0})
        return _vacuous("time_continuity", "no motion and no events", values)
    positive = means > 0
    exponent = float(np.polyfit(np.log(h[positive]), np.log(means[positive]), 1)[0]) if positive.sum() >= 2 \
        else float("nan")
    envelope = float(np.max(means / np.sqrt(h)))
    values.update({"exponent": exponent, "envelope_C": envelope})
    ok = bool(np.isfinite(exponent)) and exponent >= 0.5 - tolerance
    if not ok:
        logger.warning(f"Time continuity exponent {exponent:.4g} below 1/2 - {tolerance}")
    return CheckReport.verdict("time_continuity", ok, values, {"exponent_tolerance": tolerance})


def check_flow_property(model, policy, init, cfg: SimConfig, s: float) -> CheckReport:
    """
    Restarting at s from the reached configurations reproduces the run on
    [s, T] bitwise: same particles, labels and positions at the horizon.
    """
    full = simulate(model, policy, init, cfg)
    resumed = simulate(model, policy, full.restart_law(s), cfg.updated(t0=s))
    a, b = full.snapshots[-1], resumed.snapshots[-1]
    same_labels = [full.registry.paths[j] for j in a.label_id.tolist()] == \
        [resumed.registry.paths[j] for j in b.label_id.tolist()]
    same = (
        same_labels
        and np.array_equal(a.replica, b.replica)
        and np.array_equal(a.positions, b.positions)
    )
    return CheckReport.verdict(
        "flow_property",
        bool(same),
        {"split": s, "particles": int(a.positions.shape[0]), "resumed_particles": int(b.positions.shape[0])},
    )

"""
Tests for cylinder functionals, the generator, the Hamiltonian, the Ito
residual and the auxiliary function theta.
"""

import math

import numpy as np
import pytest

from src.calculus.auxiliary import AuxFunction, aux_sublevel_check, exclusion_check, exclusion_threshold, mass_cap
from src.calculus.cylinder import (
    CylinderFunctional,
    InnerFunction,
    combine,
    coordinate,
    cosine,
    lfd,
    lfd_fd_check,
    lfd_grad,
    lfd_segment_check,
    linear_functional,
    mass_functional,
    mass_squared,
    squared_linear,
    squared_norm,
    time_weighted,
)
from src.calculus.generator import (
    check_ito,
    check_ito_halving,
    generator_apply,
    hamiltonian_G,
    hamiltonian_lipschitz_constant,
    hjb_residual,
    ito_constant,
    ito_residual,
    terminal_gap,
)
from src.control.cost import build_cost
from src.control.policy import Policy
from src.dynamics.model import build_model
from src.dynamics.samplers import DiracLaw, single_particle
from src.dynamics.simulator import SimConfig, simulate
from src.measures.models import AtomicMeasure
from src.utils.errors import ConfigError, GridError


def _zeros_q(x):
    return np.zeros((x.shape[0], 1, 1))


def _zeros_r(x):
    return np.zeros(x.shape[0])


class TestCylinderFunctionals:
    """Test values and linear functional derivatives."""

    def setup_method(self):
        self.m = AtomicMeasure.from_atoms([([0.0], 1.0), ([2.0], 0.5)])

    def test_mass_squared_derivative(self):
        F = mass_squared()
        assert F.value(0.0, self.m) == pytest.approx(2.25)
        assert lfd(F, 0.0, self.m, [[3.0], [-1.0]]).tolist() == pytest.approx([3.0, 3.0])

    def test_linear_derivative_is_the_inner_function(self):
        F = linear_functional(squared_norm())
        x = np.array([[0.5], [1.5]])
        assert lfd(F, 0.0, self.m, x).tolist() == pytest.approx([0.25, 2.25])
        assert lfd_grad(F, 0.0, self.m, x)[:, 0].tolist() == pytest.approx([1.0, 3.0])

    def test_time_weighting(self):
        F = time_weighted(mass_functional(), 2.0)
        assert F.value(0.5, self.m) == pytest.approx(math.e * 1.5)
        assert F.time_derivative(0.5, self.m) == pytest.approx(2.0 * math.e * 1.5)

    def test_missing_gradient(self):
        bare = InnerFunction(name="bare", value=lambda x: x[:, 0])
        with pytest.raises(ValueError):
            bare.gradient(np.zeros((1, 1)))

    def test_segment_and_finite_difference_checks(self):
        other = AtomicMeasure.from_atoms([([0.5], 2.0), ([-1.0], 0.25)])
        for F in (mass_squared(), squared_linear(cosine([0.7])), linear_functional(coordinate(0))):
            assert lfd_segment_check(F, 0.0, self.m, other).passed
            assert lfd_fd_check(F, 0.0, self.m, other).passed

    def test_first_order_differences_are_rejected(self):
        # f(y) = (y - 1)|y - 1| is C^1 only at the midpoint, central differences err by O(step)
        kinked = CylinderFunctional(
            name="kinked",
            inner=(coordinate(0),),
            outer=lambda t, y: float((y[0] - 1.0) * abs(y[0] - 1.0)),
            d_t=lambda t, y: 0.0,
            d_y=lambda t, y: np.array([2.0 * abs(y[0] - 1.0)]),
            d_yy=lambda t, y: np.zeros((1, 1)),
        )
        report = lfd_fd_check(kinked, 0.0, AtomicMeasure.dirac([0.0]), AtomicMeasure.dirac([2.0]))
        assert report.values["errors"][1] == pytest.approx(report.values["errors"][0] / 2.0, rel=1e-6)
        assert not report.passed


class TestGenerator:
    """Test the generator on functionals with known images."""

    def setup_method(self):
        self.policy = Policy()
        self.m = AtomicMeasure.from_atoms([([1.0], 2.0), ([-0.5], 0.5)])

    def test_death_and_splitting(self):
        death = build_model("constant", {"gamma": 1.0, "pmf": [1.0]})
        yule = build_model("constant", {"gamma": 1.0, "pmf": [0.0, 0.0, 1.0]})
        F = mass_functional()
        assert generator_apply(death, self.policy, F, 0.0, self.m) == pytest.approx(-2.5)
        assert generator_apply(yule, self.policy, F, 0.0, self.m) == pytest.approx(2.5)

    def test_drift_and_diffusion(self):
        drifting = build_model("constant", {"beta": 0.3})
        noisy = build_model("constant", {"sigma": 0.5})
        assert generator_apply(drifting, self.policy, linear_functional(coordinate(0)), 0.0, self.m) \
            == pytest.approx(0.75)
        assert generator_apply(noisy, self.policy, linear_functional(squared_norm()), 0.0, self.m) \
            == pytest.approx(0.25 * 2.5)

    def test_linearity(self):
        model = build_model("affine", {"kappa": -0.5, "sigma": 0.5, "gamma": 1.0, "pmf": [0.25, 0.25, 0.5]})
        F, H = mass_squared(), squared_linear(cosine([1.3]))
        both = generator_apply(model, self.policy, combine(2.0, F, -0.5, H), 0.0, self.m)
        parts = 2.0 * generator_apply(model, self.policy, F, 0.0, self.m) \
            - 0.5 * generator_apply(model, self.policy, H, 0.0, self.m)
        assert both == pytest.approx(parts, rel=1e-10, abs=1e-12)

    def test_zero_measure(self):
        model = build_model("constant", {"gamma": 1.0})
        assert generator_apply(model, self.policy, mass_squared(), 0.0, AtomicMeasure.zero(1)) == 0.0


class TestHamiltonian:
    """Test the grid Hamiltonian and the HJB residual."""

    def setup_method(self):
        self.steer = build_model("constant", {"action_gain": 1.0})
        self.grid = np.linspace(-1.0, 1.0, 33).reshape(-1, 1)
        self.m = AtomicMeasure.dirac([0.3])

    def test_linear_minimum_at_the_corner(self):
        G = hamiltonian_G(self.steer, build_cost("quadratic"), 0.0, self.m,
                          lambda x: np.ones_like(x), _zeros_q, _zeros_r, self.grid)
        assert G.value == pytest.approx(-1.0, abs=1e-12)
        assert G.argmin == [-1.0]

    def test_coarse_grid_never_below_fine_grid(self):
        cost = build_cost("quadratic", {"c_a": 1.0, "c_x": 0.5})
        coarse = np.linspace(-1.0, 1.0, 9).reshape(-1, 1)
        p = lambda x: 0.3 * np.ones_like(x)  # noqa: E731
        fine_value = hamiltonian_G(self.steer, cost, 0.0, self.m, p, _zeros_q, _zeros_r, self.grid).value
        coarse_value = hamiltonian_G(self.steer, cost, 0.0, self.m, p, _zeros_q, _zeros_r, coarse).value
        assert coarse_value >= fine_value

    def test_grid_width_must_match_actions(self):
        with pytest.raises(ConfigError):
            hamiltonian_G(self.steer, build_cost("quadratic"), 0.0, self.m,
                          lambda x: np.ones_like(x), _zeros_q, _zeros_r, np.zeros((3, 2)))

    def test_lipschitz_constant_needs_bounds(self):
        bounded = build_model("constant", {"beta": 0.3, "action_gain": 1.0, "sigma": 0.4,
                                           "gamma": 0.5, "pmf": [0.3, 0.2, 0.5]})
        assert hamiltonian_lipschitz_constant(bounded, 1.0) == pytest.approx(1.3)
        affine = build_model("affine", {"kappa": -1.0})
        with pytest.raises(ConfigError):
            hamiltonian_lipschitz_constant(affine, 1.0)

    def test_terminal_gap_of_frozen_cost(self):
        cost = build_cost("quadratic", {"g0": 0.5, "g_x": 1.0, "g_m": 0.25, "target": 0.2})
        mbar = AtomicMeasure.from_atoms([([0.0], 1.0), ([1.5], 0.5)])
        g = InnerFunction(name="g", value=lambda x: cost.eval_terminal(x, mbar))
        assert terminal_gap(cost, linear_functional(g), 1.0, mbar) == pytest.approx(0.0, abs=1e-12)

    def test_hjb_residual_is_finite(self):
        cost = build_cost("quadratic", {"c_a": 1.0})
        residual = hjb_residual(self.steer, cost, time_weighted(mass_functional(), -1.0), 0.2, self.m, self.grid)
        assert math.isfinite(residual)


class TestIto:
    """Test the Ito residual on simulated paths."""

    def setup_method(self):
        self.policy = Policy()

    def test_deterministic_drift_within_budget(self):
        model = build_model("constant", {"beta": 1.0})
        cfg = SimConfig(T=0.5, dt=0.01, replicas=1, seed=0)
        path = simulate(model, self.policy, DiracLaw(single_particle([0.5])), cfg)
        result = ito_residual(model, self.policy, squared_linear(coordinate(0)), path, 0.0, 0.5)
        # only the left-point quadrature error remains
        assert abs(result.residual) <= result.budget
        assert check_ito(model, self.policy, linear_functional(coordinate(0)), path, 0.0, 0.5).passed

    def test_pure_death_mass(self):
        model = build_model("constant", {"gamma": 1.0, "pmf": [1.0]})
        cfg = SimConfig(T=0.3, dt=0.01, replicas=500, seed=4)
        path = simulate(model, self.policy, DiracLaw(single_particle([0.0])), cfg)
        assert check_ito(model, self.policy, mass_functional(), path, 0.0, 0.3).passed

    def test_needs_stride_one(self):
        model = build_model("constant", {"beta": 1.0})
        cfg = SimConfig(T=0.2, dt=0.01, replicas=1, record_stride=5)
        path = simulate(model, self.policy, DiracLaw(single_particle([0.0])), cfg)
        with pytest.raises(GridError):
            ito_residual(model, self.policy, mass_functional(), path, 0.0, 0.2)

    def test_halving_verdict(self):
        assert check_ito_halving([1e-2, 5.1e-3, 2.4e-3], [0.1, 0.05, 0.025]).passed
        assert not check_ito_halving([1e-2, 9e-3], [0.1, 0.05]).passed
        assert check_ito_halving([0.0, 0.0], [0.1, 0.05]).passed

    def test_halving_verdict_on_common_noise(self):
        dts = [0.1, 0.05, 0.025, 0.0125]
        # a shared Monte Carlo offset of 0.7 cancels in the differences
        assert check_ito_halving([0.8, 0.75, 0.725, 0.7125], dts, common_noise=True).passed
        assert not check_ito_halving([0.8, 0.7, 0.6], dts[:3], common_noise=True).passed
        assert not check_ito_halving([0.8, 0.8, 0.7], dts[:3], common_noise=True).passed

    def test_constant_ignores_replica_count(self):
        model = build_model("constant", {"beta": 1.0, "sigma": 0.5})
        F = squared_linear(coordinate(0))
        constants = []
        for replicas in (20, 2000):
            cfg = SimConfig(T=0.1, dt=1e-3, replicas=replicas, seed=1)
            path = simulate(model, self.policy, DiracLaw(single_particle([0.5])), cfg)
            constants.append(ito_residual(model, self.policy, F, path, 0.0, 0.1, resamples=20).C_F)
        assert constants[0] == pytest.approx(constants[1], rel=1e-12)

    def test_constant_of_pure_death(self):
        # V = 1, |L 1| <= 2 V, f_y = 1: C_F = 2 + 0.3 * 2
        death = build_model("constant", {"gamma": 1.0, "pmf": [1.0]})
        C_F = ito_constant(death, self.policy, mass_functional(), AtomicMeasure.dirac([0.0]), 0.0, 0.0, 0.3)
        assert C_F == pytest.approx(2.6)

    def test_constant_needs_declared_growth(self):
        coupled = build_model("mass_coupled", {"mass_drift": 1.0})
        with pytest.raises(ConfigError):
            ito_constant(coupled, self.policy, mass_functional(), AtomicMeasure.dirac([0.0]), 0.0, 0.0, 0.1)
        bare = linear_functional(InnerFunction(name="bare", value=lambda x: x[:, 0]))
        drift = build_model("constant", {"beta": 1.0})
        with pytest.raises(ConfigError):
            ito_constant(drift, self.policy, bare, AtomicMeasure.dirac([0.0]), 0.0, 0.0, 0.1)

    def test_systematic_part_halves_on_shared_noise(self):
        model = build_model("constant", {"beta": 1.0, "sigma": 0.5})
        F = squared_linear(coordinate(0))
        law = DiracLaw(single_particle([0.5]))
        dts = [1e-3, 5e-4, 2.5e-4]
        runs = []
        for seed in (3, 4):
            base = SimConfig(T=0.2, dt=dts[0], replicas=300, seed=seed, noise_dt=dts[-1])
            runs.append([
                ito_residual(model, self.policy, F, simulate(model, self.policy, law, base.updated(dt=dt)),
                             0.0, 0.2, resamples=1).residual
                for dt in dts
            ])
        report = check_ito_halving(np.mean(runs, axis=0).tolist(), dts, tolerance=0.2, common_noise=True)
        assert report.passed, report.values
        assert 0.3 <= report.values["ratios"][0] <= 0.7


class TestAuxiliary:
    """Test theta and its sub-level sets."""

    def test_value_and_derivative(self):
        theta = AuxFunction(L_coeff=1.0)
        m = AtomicMeasure.dirac([0.0])
        assert theta.value(0.0, m) == pytest.approx(2.0)
        assert theta.derivative(0.0, m, [[0.0]])[0] == pytest.approx(3.0)
        assert theta.value(1.0, m) == pytest.approx(2.0 / math.e)

    def test_mass_cap_solves_its_quadratic(self):
        cap = mass_cap(5.0, 1.0, 1.0, 1.0)
        growth = math.e
        assert cap ** 2 + (1.0 - growth) * cap - 5.0 * growth == pytest.approx(0.0, abs=1e-9)
        assert cap > 0

    def test_exclusion_threshold(self):
        for t in (0.0, 0.3, 1.0):
            assert exclusion_check(t, 5.0, 1.0, 1.0).passed
        n_star = exclusion_threshold(0.0, 5.0, 1.0, 1.0)
        theta = AuxFunction(L_coeff=1.0)
        beyond = AtomicMeasure.dirac([0.0], n_star + 0.1)
        assert not theta.in_sublevel(0.0, beyond, 5.0, 1.0)

    def test_negative_constants_rejected(self):
        with pytest.raises(ConfigError):
            mass_cap(-1.0, 1.0, 1.0, 1.0)

    def test_sublevel_samples(self):
        rng = np.random.default_rng(0)
        samples = [(0.0, AtomicMeasure.zero(1))]
        for _ in range(30):
            n = int(rng.integers(1, 4))
            m = AtomicMeasure.from_atoms([([x], w) for x, w in zip(rng.normal(size=n), rng.uniform(0, 2, n))])
            samples.append((float(rng.uniform(0, 1)), m))
        report = aux_sublevel_check(samples, 5.0, 1.0, 1.0, T=1.0, radius=3.0)
        assert report.passed
        assert report.values["in_sublevel"] >= 1

    def test_no_samples_is_vacuous(self):
        assert aux_sublevel_check([], 5.0, 1.0, 1.0).status.value == "vacuous"

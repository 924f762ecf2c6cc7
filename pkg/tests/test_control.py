"""
Tests for policies, the cost functional and the value search.
"""

import numpy as np
import pytest

from src.control.cost import bootstrap_stderr, build_cost, evaluate_cost, terminal_value
from src.control.policy import Policy, PolicyFamily, embed_parameters, n_parameters, zero_policy
from src.control.value import (
    SearchBudget,
    approximate_value,
    canonical_law,
    check_dpp,
    check_policy_monotonicity,
    check_xi_invariance,
)
from src.dynamics.model import build_model
from src.dynamics.samplers import DiracLaw, single_particle
from src.dynamics.simulator import SimConfig
from src.measures.models import AtomicMeasure
from src.utils.errors import ConfigError, ModelBoundError


class TestPolicy:
    """Test parametric feedback policies."""

    def test_parameter_counts(self):
        assert n_parameters(PolicyFamily.CONSTANT, 2, 1) == 1
        assert n_parameters(PolicyFamily.AFFINE_CLAMPED, 2, 1) == 3
        assert n_parameters(PolicyFamily.TANH_FEATURES, 2, 1) == 7

    def test_wrong_parameter_count(self):
        with pytest.raises(ValueError):
            Policy(family=PolicyFamily.AFFINE_CLAMPED, parameters=(0.0,))

    def test_actions_are_clamped_to_the_box(self):
        policy = Policy(family=PolicyFamily.AFFINE_CLAMPED, parameters=(0.0, 5.0))
        actions = policy.act(0.0, np.array([[-1.0], [0.1], [1.0]]))
        assert actions[:, 0].tolist() == pytest.approx([-1.0, 0.5, 1.0])
        assert policy.lipschitz == pytest.approx(5.0)
        assert policy.growth == pytest.approx(1.0)

    def test_probe_stays_below_certificate(self):
        policy = Policy(family=PolicyFamily.TANH_FEATURES, parameters=(0.1, 0.5, -0.3, 0.2))
        assert policy.certify(n_pairs=128, seed=3) <= policy.lipschitz + 1e-12

    def test_embedding_keeps_the_feedback(self):
        constant = Policy(parameters=(0.4,))
        affine = embed_parameters(constant, PolicyFamily.AFFINE_CLAMPED)
        x = np.linspace(-2, 2, 7).reshape(-1, 1)
        assert np.allclose(affine.act(0.0, x), constant.act(0.0, x))

    def test_action_grid(self):
        grid = zero_policy().action_grid(5)
        assert grid[:, 0].tolist() == pytest.approx([-1.0, -0.5, 0.0, 0.5, 1.0])


class TestCost:
    """Test the cost functional and its Monte Carlo estimate."""

    def setup_method(self):
        self.model = build_model("constant", {"action_gain": 1.0})
        self.cost = build_cost("quadratic", {"c_a": 1.0, "g_x": 1.0})

    def test_terminal_value(self):
        nu = AtomicMeasure.from_atoms([([1.0], 0.5), ([3.0], 0.5)])
        assert terminal_value(self.cost, nu) == pytest.approx(5.0)
        assert terminal_value(self.cost, AtomicMeasure.zero(1)) == 0.0

    def test_constant_control_cost_is_exact(self):
        cfg = SimConfig(T=1.0, dt=0.01, replicas=3, seed=0)
        law = DiracLaw(single_particle([1.0]))
        estimate = evaluate_cost(self.model, Policy(parameters=(-0.5,)), self.cost, law, cfg)
        # 1 * 0.25 running + (1 - 0.5)^2 terminal
        assert estimate.estimate == pytest.approx(0.5, abs=1e-9)
        assert estimate.stderr == 0.0

    def test_declared_bound_enforced(self):
        tight = build_cost("quadratic", {"c0": 1.0, "running_bound": 0.1})
        cfg = SimConfig(T=0.1, dt=0.05, replicas=1)
        with pytest.raises(ModelBoundError):
            evaluate_cost(self.model, Policy(), tight, DiracLaw(single_particle([0.0])), cfg)

    def test_unknown_cost_family(self):
        with pytest.raises(ConfigError):
            build_cost("entropic")

    def test_bootstrap_of_constant_samples(self):
        assert bootstrap_stderr(np.full(10, 2.0), seed=1) == 0.0
        assert bootstrap_stderr(np.array([1.0]), seed=1) == 0.0


class TestValueSearch:
    """Test the approximate value function on a linear-quadratic problem."""

    def setup_method(self):
        self.model = build_model("constant", {"action_gain": 1.0})
        self.cost = build_cost("quadratic", {"c_a": 1.0, "g_x": 1.0})
        self.cfg = SimConfig(T=1.0, dt=0.01, replicas=1, seed=7)
        self.budget = SearchBudget(restarts=1, iterations=200, replicas=2, xatol=1e-7, fatol=1e-12)

    def test_value_at_horizon_is_terminal(self):
        nu = AtomicMeasure.from_atoms([([0.5], 2.0), ([-1.0], 0.25)])
        result = approximate_value(self.model, self.cost, nu, 1.0, PolicyFamily.CONSTANT, self.budget, self.cfg)
        assert result.value == terminal_value(self.cost, nu)
        assert result.converged

    def test_time_after_horizon(self):
        with pytest.raises(ConfigError):
            approximate_value(self.model, self.cost, AtomicMeasure.dirac([0.0]), 1.5,
                              PolicyFamily.CONSTANT, self.budget, self.cfg)

    def test_linear_quadratic_oracle(self):
        result = approximate_value(self.model, self.cost, AtomicMeasure.dirac([1.0]), 0.0,
                                   PolicyFamily.CONSTANT, self.budget, self.cfg)
        assert result.value == pytest.approx(0.5, abs=1e-4)
        assert result.best_policy.parameters[0] == pytest.approx(-0.5, abs=1e-2)

    def test_split_at_start_is_trivial(self):
        budget = self.budget.model_copy(update={"iterations": 40})
        cfg = self.cfg.updated(dt=0.1)
        report = check_dpp(self.model, self.cost, AtomicMeasure.dirac([1.0]), 0.0, 0.0,
                           PolicyFamily.CONSTANT, budget, cfg)
        assert report.passed
        assert report.values["gap"] == 0.0

    def test_split_outside_interval(self):
        with pytest.raises(ConfigError):
            check_dpp(self.model, self.cost, AtomicMeasure.dirac([1.0]), 0.5, 0.25,
                      PolicyFamily.CONSTANT, self.budget, self.cfg)

    def test_larger_family_does_not_increase_value(self):
        budget = self.budget.model_copy(update={"iterations": 100})
        report = check_policy_monotonicity(self.model, self.cost, AtomicMeasure.dirac([1.0]), 0.0,
                                           budget, self.cfg.updated(dt=0.05))
        assert report.passed
        small, large = report.values["values"]
        assert large <= small + 1e-6

    def test_unknown_law_construction(self):
        with pytest.raises(ConfigError):
            canonical_law(AtomicMeasure.dirac([0.0]), "stratified")

    def test_xi_invariance(self):
        model = build_model("constant", {})
        cost = build_cost("quadratic", {"g_x": 1.0})
        cfg = SimConfig(T=0.1, dt=0.05, replicas=2000, seed=3)
        report = check_xi_invariance(model, Policy(), cost, AtomicMeasure.dirac([1.0], weight=1.5), cfg)
        assert report.passed

"""
Tests for the branching particle simulator, its samplers and the
a-priori estimate checks.
"""

import math

import numpy as np
import pandas as pd
import pytest

from src.control.policy import Policy
from src.dynamics.estimates import (
    batch_d_E,
    check_first_moment_bound,
    check_flow_property,
    check_measure_stability,
    check_second_moment_bound,
    first_moment_bound,
)
from src.dynamics.model import Assumption, build_model
from src.dynamics.rng import Channel, normals, stream_keys, uniforms
from src.dynamics.samplers import (
    DiracLaw,
    FixedLaw,
    PerturbedPairLaw,
    PoissonCoupledPairLaw,
    PoissonizedLaw,
    RoundedLaw,
    single_particle,
)
from src.dynamics.simulator import InteractionMode, SimConfig, mean_functional, simulate
from src.measures.models import AtomicMeasure, Configuration, is_antichain
from src.measures.operations import d_E
from src.utils.config import settings
from src.utils.errors import ConfigError, DimensionError, GridError, ModelBoundError, NumericalError


def _coupled_paths(model, law, cfg, policy):
    """Simulate both sides of a coupled law with the same seed."""
    first, second = law.pair_states(cfg.replicas, cfg.seed)
    path_a = simulate(model, policy, FixedLaw(first, cfg.replicas, model.dim), cfg)
    path_b = simulate(model, policy, FixedLaw(second, cfg.replicas, model.dim), cfg)
    return path_a, path_b


class TestModelRegistry:
    """Test the built-in coefficient families."""

    def test_declared_constants(self):
        model = build_model("affine", {"kappa": -0.5, "sigma": 0.5, "gamma": 1.0, "pmf": [0.25, 0.25, 0.5]})
        assert model.drift_bound is None
        assert model.has(Assumption.LINEAR_GROWTH)
        assert model.M1 == pytest.approx(1.25)
        assert model.M2 == pytest.approx(2.25)
        assert model.max_offspring == 2
        assert model.diffusion_bound == pytest.approx(0.5)

    def test_constant_family_is_bounded(self):
        model = build_model("constant", {"beta": 0.3, "action_gain": 1.0})
        bounds = model.coefficient_bounds(action_bound=2.0)
        assert bounds["b"] == pytest.approx(2.3)
        assert model.has(Assumption.BOUNDED)

    def test_branching_mean(self):
        model = build_model("constant", {"gamma": 2.0, "pmf": [0.0, 0.0, 1.0]})
        x = np.zeros((3, 1))
        mean = model.branching_mean(0.0, x, AtomicMeasure.zero(1), np.zeros((3, 1)))
        assert np.allclose(mean, 2.0)

    def test_unknown_family(self):
        with pytest.raises(ConfigError):
            build_model("quadratic")

    def test_unknown_key_rejected(self):
        with pytest.raises(ValueError):
            build_model("constant", {"kapa": 1.0})

    def test_bad_pmf_rejected(self):
        with pytest.raises(ConfigError):
            build_model("constant", {"pmf": [0.5, 0.2]})

    def test_offspring_cap_is_a_config_error(self):
        pmf = [0.0] * (settings.offspring_cap + 1) + [1.0]
        with pytest.raises(ConfigError) as exc:
            build_model("constant", {"gamma": 1.0, "pmf": pmf})
        assert exc.value.diagnostic().startswith("error[config]")
        assert "cap" in exc.value.message

    def test_gamma_above_gamma_bar_is_a_config_error(self):
        with pytest.raises(ConfigError):
            build_model("constant", {"gamma": 2.0, "gamma_bar": 1.0})

    def test_drift_envelope(self):
        affine = build_model("affine", {"beta": 0.2, "kappa": -0.5, "action_gain": 1.0})
        assert affine.drift_envelope(2.0) == pytest.approx((2.2, 0.5))
        assert build_model("constant", {"beta": 0.3}).drift_envelope(0.0) == pytest.approx((0.3, 0.0))
        assert build_model("mass_coupled", {"mass_drift": 1.0}).drift_envelope(0.0) is None

    def test_rate_mass_needs_gamma_bar(self):
        with pytest.raises(ConfigError):
            build_model("mass_coupled", {"rate_mass": 0.5})

    def test_rate_above_gamma_bar_is_rejected_at_evaluation(self):
        model = build_model("constant", {"gamma": 1.0})
        broken = model.model_copy(update={"rate": lambda t, x, m, a: np.full(x.shape[0], 5.0)})
        x = np.zeros((1, 1))
        with pytest.raises(ModelBoundError):
            broken.eval_rate(0.0, x, AtomicMeasure.zero(1), np.zeros((1, 1)))


class TestRandomStreams:
    """Test the counter-based streams."""

    def test_streams_are_pure_functions(self):
        replica = np.array([0, 1, 1], dtype=np.int64)
        hashes = np.array([3, 5, 7], dtype=np.uint64)
        keys = stream_keys(11, replica, hashes, Channel.MOTION, 4)
        assert np.array_equal(normals(keys, 2), normals(stream_keys(11, replica, hashes, Channel.MOTION, 4), 2))
        # permuting particles permutes their draws
        perm = np.array([2, 0, 1])
        permuted = stream_keys(11, replica[perm], hashes[perm], Channel.MOTION, 4)
        assert np.array_equal(uniforms(permuted, 3), uniforms(keys, 3)[perm])

    def test_channels_differ(self):
        replica = np.zeros(1, dtype=np.int64)
        hashes = np.zeros(1, dtype=np.uint64)
        a = uniforms(stream_keys(1, replica, hashes, Channel.MOTION, 0), 1)
        b = uniforms(stream_keys(1, replica, hashes, Channel.EVENT, 0), 1)
        assert a[0, 0] != b[0, 0]

    def test_uniform_range(self):
        keys = stream_keys(3, np.arange(1000), np.zeros(1000, dtype=np.uint64), Channel.EVENT, 9)
        u = uniforms(keys, 2)
        assert u.min() >= 0.0 and u.max() < 1.0
        assert abs(u.mean() - 0.5) < 0.05


class TestSamplers:
    """Test the initial laws."""

    def test_dirac_law_repeats_configuration(self):
        e = Configuration.from_items([("1", [0.0]), ("2", [1.0])])
        configs = DiracLaw(e).sample(3, seed=0)
        assert all(d_E(c, e) == 0.0 for c in configs)

    def test_rounded_law_integer_weights_exact(self):
        state = RoundedLaw(AtomicMeasure.dirac([0.5], weight=3.0)).initial_state(4, seed=1)
        assert np.array_equal(np.bincount(state.replica), [3, 3, 3, 3])

    def test_rounded_law_fractional_mean(self):
        state = RoundedLaw(AtomicMeasure.dirac([0.0], weight=2.5)).initial_state(4000, seed=2)
        counts = np.bincount(state.replica, minlength=4000)
        assert set(np.unique(counts)) <= {2, 3}
        assert counts.mean() == pytest.approx(2.5, abs=0.05)

    def test_poissonized_law_mean(self):
        state = PoissonizedLaw(AtomicMeasure.dirac([0.0], weight=1.5)).initial_state(4000, seed=3)
        assert np.bincount(state.replica, minlength=4000).mean() == pytest.approx(1.5, abs=0.1)

    def test_perturbed_pair_shifts_every_particle(self):
        law = PerturbedPairLaw(RoundedLaw(AtomicMeasure.dirac([0.0], weight=2.0)), epsilon=0.1)
        first, second = law.pair_states(5, seed=0)
        assert first.paths == second.paths
        assert np.allclose(second.positions - first.positions, 0.1)

    def test_poisson_coupled_pair_shares_labels(self):
        law = PoissonCoupledPairLaw(AtomicMeasure.dirac([0.0], weight=1.0), AtomicMeasure.dirac([0.2], weight=1.5))
        first, second = law.pair_states(200, seed=4)
        n1 = np.bincount(first.replica, minlength=200)
        n2 = np.bincount(second.replica, minlength=200)
        assert np.all(n2 >= n1)

    def test_negative_perturbation_rejected(self):
        with pytest.raises(ConfigError):
            PerturbedPairLaw(RoundedLaw(AtomicMeasure.dirac([0.0])), epsilon=-1.0)


class TestSimulator:
    """Test the Euler-Maruyama and thinning simulator."""

    def setup_method(self):
        self.policy = Policy()
        self.drifting = build_model("constant", {"beta": 1.0})
        self.branching = build_model(
            "affine", {"kappa": -0.5, "sigma": 0.5, "gamma": 1.0, "pmf": [0.25, 0.25, 0.5]}
        )

    def test_deterministic_motion(self):
        cfg = SimConfig(T=0.5, dt=0.01, replicas=2, seed=0)
        path = simulate(self.drifting, self.policy, DiracLaw(single_particle([0.0])), cfg)
        final = path.snapshots[-1]
        assert np.allclose(final.positions[:, 0], 0.5)
        assert path.stats.branch_events == 0

    def test_same_seed_same_run(self):
        cfg = SimConfig(T=0.2, dt=0.01, replicas=20, seed=5)
        law = DiracLaw(single_particle([0.0]))
        a = simulate(self.branching, self.policy, law, cfg).particle_table()
        b = simulate(self.branching, self.policy, law, cfg).particle_table()
        pd.testing.assert_frame_equal(a, b)

    def test_labels_stay_an_antichain(self):
        cfg = SimConfig(T=0.5, dt=0.01, replicas=10, seed=1)
        path = simulate(self.branching, self.policy, DiracLaw(single_particle([0.0])), cfg)
        last = len(path.snapshots) - 1
        for r in range(path.replicas):
            assert is_antichain(k.path for k in path.configuration(last, r).labels)

    def test_record_stride_keeps_horizon(self):
        cfg = SimConfig(T=0.25, dt=0.01, replicas=2, seed=0, record_stride=10)
        path = simulate(self.drifting, self.policy, DiracLaw(single_particle([0.0])), cfg)
        assert np.allclose(path.times, [0.0, 0.1, 0.2, 0.25])
        with pytest.raises(GridError):
            path.index_of(0.15)

    def test_off_grid_horizon(self):
        cfg = SimConfig(T=0.105, dt=0.01, replicas=1)
        with pytest.raises(GridError):
            simulate(self.drifting, self.policy, DiracLaw(single_particle([0.0])), cfg)

    def test_thinning_step_limit(self):
        fast = build_model("constant", {"gamma": 50.0, "pmf": [1.0]})
        with pytest.raises(ConfigError):
            simulate(fast, self.policy, DiracLaw(single_particle([0.0])), SimConfig(T=0.1, dt=0.05, replicas=1))

    def test_policy_dimension_mismatch(self):
        policy = Policy(state_dim=2, parameters=(0.0,))
        with pytest.raises(DimensionError):
            simulate(self.drifting, policy, DiracLaw(single_particle([0.0])), SimConfig(T=0.1, dt=0.05, replicas=1))

    def test_non_finite_positions_are_reported(self):
        broken = self.drifting.model_copy(update={"drift": lambda t, x, m, a: np.full(x.shape, np.inf)})
        with pytest.raises(NumericalError) as exc:
            simulate(broken, self.policy, DiracLaw(single_particle([0.0])), SimConfig(T=0.1, dt=0.05, replicas=1))
        assert exc.value.report["step"] == 1

    def test_frozen_interaction_needs_flow(self):
        with pytest.raises(ValueError):
            SimConfig(interaction=InteractionMode.FROZEN)

    def test_pure_death_mass_decays(self):
        death = build_model("constant", {"gamma": 1.0, "pmf": [1.0]})
        cfg = SimConfig(T=0.5, dt=0.01, replicas=2000, seed=3, record_stride=50)
        path = simulate(death, self.policy, DiracLaw(single_particle([0.0])), cfg)
        estimate, stderr = mean_functional(path, 0.5, lambda x: np.ones(x.shape[0]))
        assert abs(estimate - math.exp(-0.5)) <= 4.0 * stderr + 0.02
        assert path.stats.death_events > 0

    def test_unit_noise_resolution_changes_nothing(self):
        cfg = SimConfig(T=0.2, dt=0.01, replicas=20, seed=5)
        law = DiracLaw(single_particle([1.0]))
        plain = simulate(self.branching, self.policy, law, cfg)
        slotted = simulate(self.branching, self.policy, law, cfg.updated(noise_dt=0.01))
        pd.testing.assert_frame_equal(plain.particle_table(), slotted.particle_table())

    def test_coarse_and_fine_steps_share_brownian_paths(self):
        noisy = build_model("constant", {"beta": 0.5, "sigma": 1.0})
        law = DiracLaw(single_particle([0.0]))
        fine = SimConfig(T=0.2, dt=0.005, replicas=8, seed=9, noise_dt=0.005)
        ends = [
            simulate(noisy, self.policy, law, fine.updated(dt=dt)).snapshots[-1].positions
            for dt in (0.005, 0.01, 0.02)
        ]
        assert np.allclose(ends[0], ends[1], atol=1e-12)
        assert np.allclose(ends[0], ends[2], atol=1e-12)

    def test_coarse_and_fine_steps_share_deaths(self):
        death = build_model("constant", {"gamma": 1.0, "pmf": [1.0]})
        law = DiracLaw(single_particle([0.0]))
        cfg = SimConfig(T=0.5, dt=0.01, replicas=200, seed=2, noise_dt=0.0025)
        coarse = simulate(death, self.policy, law, cfg)
        fine = simulate(death, self.policy, law, cfg.updated(dt=0.0025))
        assert np.array_equal(coarse.counts(len(coarse.snapshots) - 1), fine.counts(len(fine.snapshots) - 1))
        assert coarse.stats.death_events == fine.stats.death_events > 0

    def test_noise_resolution_must_divide_dt(self):
        with pytest.raises(ValueError):
            SimConfig(dt=0.01, noise_dt=0.003)
        assert SimConfig(dt=0.01, noise_dt=0.0025).substeps == 4

    def test_tables(self):
        cfg = SimConfig(T=0.1, dt=0.05, replicas=2, seed=0)
        path = simulate(self.drifting, self.policy, DiracLaw(single_particle([0.0])), cfg)
        assert list(path.particle_table().columns) == ["time", "replica", "label", "x1"]
        moments = path.moment_table()
        assert moments["mass"].tolist() == [1.0, 1.0, 1.0]


class TestEstimates:
    """Test the moment, stability and flow checks."""

    def setup_method(self):
        self.policy = Policy()
        self.model = build_model(
            "affine", {"kappa": -0.5, "sigma": 0.5, "gamma": 1.0, "pmf": [0.25, 0.25, 0.5]}
        )
        self.cfg = SimConfig(T=0.5, dt=0.01, replicas=200, seed=2, record_stride=25)

    def test_moment_bounds_hold(self):
        path = simulate(self.model, self.policy, DiracLaw(single_particle([0.0])), self.cfg)
        assert first_moment_bound(path) == pytest.approx(math.exp(1.25 * 0.5))
        assert check_first_moment_bound(path).passed
        assert check_second_moment_bound(path).passed

    def test_empty_start_is_vacuous(self):
        path = simulate(self.model, self.policy, DiracLaw(Configuration.empty(1)), self.cfg)
        assert check_first_moment_bound(path).status.value == "vacuous"

    def test_self_distance_is_zero(self):
        path = simulate(self.model, self.policy, DiracLaw(single_particle([0.0])), self.cfg)
        assert np.all(batch_d_E(path, 1, path, 1) == 0)

    def test_measure_stability(self):
        law = PoissonCoupledPairLaw(AtomicMeasure.dirac([0.0], weight=1.0), AtomicMeasure.dirac([0.1], weight=1.2))
        path_a, path_b = _coupled_paths(self.model, law, self.cfg, self.policy)
        assert check_measure_stability(path_a, path_b, 0.5).passed

    def test_flow_property(self):
        law = RoundedLaw(AtomicMeasure.dirac([0.0], weight=1.5))
        report = check_flow_property(self.model, self.policy, law, self.cfg.updated(replicas=20), 0.25)
        assert report.passed

"""
Tests for the Fourier-Wasserstein metric, the truncated Wasserstein-1
distance with cemetery, its dual lower bound and the domination check.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from src.measures.models import AtomicMeasure
from src.metrics.domination import check_domination, domination_constant
from src.metrics.fourier import (
    LambdaIndex,
    QuadratureMode,
    QuadratureScheme,
    d_F,
    lambda_for_dim,
    rho_F,
    sobolev_neg_norm,
)
from src.metrics.wasserstein import (
    TrialFunction,
    distance_trial,
    normalized_w1,
    truncated_w1,
    w1_dual_lower_bound,
)
from src.utils.errors import CertificationError, DimensionError, SchemeError


def _measure(atoms):
    return AtomicMeasure.from_atoms([([x], w) for x, w in atoms], dim=1)


atoms_1d = st.lists(
    st.tuples(st.floats(-2, 2, allow_nan=False), st.floats(0, 2, allow_nan=False)),
    min_size=0, max_size=4
)


class TestLambdaIndex:
    """Test the Sobolev index rule."""

    def test_rule(self):
        assert [lambda_for_dim(d) for d in (1, 2, 3, 4, 5)] == [4, 4, 4, 6, 6]

    def test_inconsistent_index_rejected(self):
        with pytest.raises(ValueError):
            LambdaIndex(d=1, lam=3)

    def test_nonpositive_dimension(self):
        with pytest.raises(DimensionError):
            lambda_for_dim(0)


class TestFourierMetric:
    """Test rho_F and the negative Sobolev norm."""

    def setup_method(self):
        self.zero = AtomicMeasure.dirac([0.0])
        self.double = AtomicMeasure.dirac([0.0], weight=2.0)

    def test_closed_form_values(self):
        assert rho_F(self.zero, self.double).value ** 2 == pytest.approx(5.0 / 32.0, rel=1e-12)
        assert sobolev_neg_norm(self.zero, self.double).value ** 2 == pytest.approx(5.0 * math.pi / 16.0, rel=1e-12)

    def test_grid_matches_closed_form(self):
        grid = QuadratureScheme(mode=QuadratureMode.TRUNCATED_GRID, radius=50.0, nodes_per_axis=20001)
        a = _measure([(0.0, 1.0), (0.7, 0.5)])
        b = _measure([(-0.4, 2.0)])
        exact = rho_F(a, b).value ** 2
        approx = rho_F(a, b, scheme=grid)
        assert approx.value ** 2 == pytest.approx(exact, abs=1e-8 + approx.tail_bound)

    def test_bessel_kernel_matches_closed_form_in_d1(self):
        bessel = QuadratureScheme(mode=QuadratureMode.BESSEL_KERNEL)
        a = _measure([(0.0, 1.0), (1.5, 0.25)])
        b = _measure([(0.5, 1.0)])
        assert rho_F(a, b, scheme=bessel).value == pytest.approx(rho_F(a, b).value, rel=1e-6)

    def test_closed_form_rejected_outside_d1(self):
        m = AtomicMeasure.dirac([0.0, 0.0])
        with pytest.raises(SchemeError):
            rho_F(m, m, scheme=QuadratureScheme(mode=QuadratureMode.CLOSED_FORM_D1))

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            rho_F(self.zero, AtomicMeasure.dirac([0.0, 0.0]))

    def test_d_F_combines_time(self):
        assert d_F(0.0, self.zero, 0.3, self.zero) == pytest.approx(0.3)

    @settings(max_examples=30, deadline=None)
    @given(atoms_1d, atoms_1d)
    def test_symmetric_and_nonnegative(self, a, b):
        m1, m2 = _measure(a), _measure(b)
        forward = rho_F(m1, m2).value
        assert forward >= 0.0
        assert forward == pytest.approx(rho_F(m2, m1).value, abs=1e-7)
        assert rho_F(m1, m1).value == pytest.approx(0.0, abs=1e-7)


class TestTruncatedW1:
    """Test the transport distance with cemetery."""

    def test_mass_gap_at_base_point(self):
        result = truncated_w1(AtomicMeasure.dirac([0.0]), AtomicMeasure.dirac([0.0], weight=2.0))
        assert result.value == pytest.approx(1.0)

    def test_small_shift(self):
        result = truncated_w1(AtomicMeasure.dirac([0.0]), AtomicMeasure.dirac([0.3]))
        assert result.value == pytest.approx(0.3)

    def test_ground_cost_is_truncated(self):
        result = truncated_w1(AtomicMeasure.dirac([0.0]), AtomicMeasure.dirac([40.0]))
        assert result.value == pytest.approx(1.0)

    def test_padding_does_not_change_value(self):
        a = _measure([(0.0, 1.0), (0.9, 0.5)])
        b = _measure([(2.0, 1.0)])
        assert truncated_w1(a, b, padding=1.5).value == pytest.approx(truncated_w1(a, b).value, abs=1e-9)

    def test_both_zero(self):
        assert truncated_w1(AtomicMeasure.zero(1), AtomicMeasure.zero(1)).value == 0.0

    def test_normalized_requires_mass(self):
        with pytest.raises(ValueError):
            normalized_w1(AtomicMeasure.zero(1), AtomicMeasure.dirac([0.0]))

    @settings(max_examples=25, deadline=None)
    @given(atoms_1d, atoms_1d, atoms_1d)
    def test_triangle_inequality(self, a, b, c):
        m1, m2, m3 = _measure(a), _measure(b), _measure(c)
        direct = truncated_w1(m1, m3).value
        assert direct <= truncated_w1(m1, m2).value + truncated_w1(m2, m3).value + 1e-7


class TestDualBound:
    """Test the dual lower bound and trial certification."""

    def test_no_trials_gives_mass_gap(self):
        bound = w1_dual_lower_bound(AtomicMeasure.dirac([0.0]), AtomicMeasure.dirac([1.0], weight=3.0), [])
        assert bound.value == pytest.approx(2.0)
        assert bound.best_trial is None

    def test_lower_bounds_primal(self):
        a = _measure([(0.0, 1.0), (0.9, 0.5)])
        b = _measure([(0.3, 1.0), (2.0, 1.0)])
        trials = [distance_trial([c]) for c in (-1.0, 0.0, 0.3, 0.9, 2.0)]
        assert w1_dual_lower_bound(a, b, trials).value <= truncated_w1(a, b).value + 1e-9

    def test_uncertified_trial_rejected(self):
        steep = TrialFunction(name="steep", func=lambda x: 2.0 * x[:, 0], lipschitz=2.0, vanishing_point=(0.0,))
        with pytest.raises(CertificationError):
            w1_dual_lower_bound(AtomicMeasure.dirac([0.0]), AtomicMeasure.dirac([1.0]), [steep])

    def test_lying_certificate_rejected(self):
        liar = TrialFunction(name="liar", func=lambda x: 3.0 * x[:, 0], lipschitz=1.0, vanishing_point=(0.0,))
        with pytest.raises(CertificationError):
            w1_dual_lower_bound(AtomicMeasure.dirac([0.0]), AtomicMeasure.dirac([0.2]), [liar])


class TestDomination:
    """Test rho_F <= C W1bar."""

    def test_constant_is_positive_and_cached(self):
        assert domination_constant(1, 4) > 0
        assert domination_constant(1, 4) == domination_constant(1, 4)

    def test_holds_on_simple_pair(self):
        report = check_domination(AtomicMeasure.dirac([0.0]), AtomicMeasure.dirac([0.3], weight=1.5))
        assert report.passed
        assert report.values["rho_F"] <= report.values["bound"] + report.budgets["slack"]

    def test_holds_in_two_dimensions(self):
        m1 = AtomicMeasure.from_atoms([([0.0, 0.0], 1.0), ([1.0, 0.5], 0.5)])
        m2 = AtomicMeasure.dirac([0.2, -0.1], weight=2.0)
        assert check_domination(m1, m2).passed

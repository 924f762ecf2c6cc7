"""
Tests for atomic measures, labelled configurations and the measure file format.
"""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from src.measures.models import AtomicMeasure, Configuration, Label, is_antichain
from src.measures.operations import config_to_measure, configuration_sum, d_E, integrate
from src.storage.measure_io import format_measure, parse_measure, read_measure, write_measure
from src.utils.errors import ConfigError, DimensionError


class TestLabel:
    """Test Ulam-Harris-Neveu labels."""

    def test_root_and_children(self):
        root = Label.root()
        child = root.child(2).child(1)
        assert str(root) == "∅"
        assert str(child) == "2.1"
        assert child.parent == Label(path=(2,))
        assert child.depth == 2

    def test_parse_inverts_str(self):
        for text in ("∅", "1", "3.1.2"):
            assert str(Label.parse(text)) == text

    def test_prefix_order(self):
        assert Label(path=(1,)).precedes(Label(path=(1, 4)))
        assert not Label(path=(1,)).precedes(Label(path=(1,)))
        assert not Label(path=(2,)).precedes(Label(path=(1, 4)))

    def test_nonpositive_entries_rejected(self):
        with pytest.raises(ValueError):
            Label(path=(1, 0))

    def test_antichain(self):
        assert is_antichain([(1,), (2, 1), (2, 2)])
        assert not is_antichain([(1,), (1, 3)])


class TestAtomicMeasure:
    """Test construction and algebra of atomic measures."""

    def test_zero_measure(self):
        m = AtomicMeasure.zero(2)
        assert m.n_atoms == 0
        assert m.total_mass == 0.0
        assert np.array_equal(m.first_moment, np.zeros(2))

    def test_moments(self):
        m = AtomicMeasure.from_atoms([([1.0], 0.5), ([3.0], 0.5)])
        assert m.total_mass == pytest.approx(1.0)
        assert m.first_moment[0] == pytest.approx(2.0)
        assert m.second_moment == pytest.approx(5.0)

    def test_negative_weight_rejected(self):
        with pytest.raises(ValueError):
            AtomicMeasure.from_atoms([([0.0], -1.0)])

    def test_non_finite_position_rejected(self):
        with pytest.raises(ValueError):
            AtomicMeasure.from_atoms([([np.nan], 1.0)])

    def test_empty_needs_dimension(self):
        with pytest.raises(DimensionError):
            AtomicMeasure.from_atoms([])

    def test_equality_is_merge_invariant(self):
        split = AtomicMeasure.from_atoms([([1.0], 0.5), ([0.0], 1.0), ([1.0], 0.5)])
        whole = AtomicMeasure.from_atoms([([0.0], 1.0), ([1.0], 1.0)])
        assert split == whole
        assert split.merged().n_atoms == 2

    def test_zero_weight_atoms_are_dropped(self):
        m = AtomicMeasure.from_atoms([([5.0], 0.0), ([1.0], 1.0)])
        assert m == AtomicMeasure.dirac([1.0])

    def test_add_rejects_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            AtomicMeasure.dirac([0.0]).add(AtomicMeasure.dirac([0.0, 0.0]))

    def test_arrays_are_read_only(self):
        m = AtomicMeasure.dirac([1.0])
        with pytest.raises(ValueError):
            m.weights[0] = 3.0

    @settings(max_examples=50, deadline=None)
    @given(st.lists(
        st.tuples(st.floats(-5, 5, allow_nan=False), st.floats(0, 3, allow_nan=False)),
        min_size=1, max_size=6
    ))
    def test_merge_preserves_integrals(self, atoms):
        m = AtomicMeasure.from_atoms([([x], w) for x, w in atoms])
        phi = lambda x: np.cos(x[:, 0])
        assert integrate(m.merged(), phi) == pytest.approx(integrate(m, phi), abs=1e-9)


class TestConfiguration:
    """Test labelled configurations and the metric d_E."""

    def test_from_positions_canonical_labels(self):
        single = Configuration.from_positions(np.array([[0.5]]))
        assert single.labels == [Label.root()]
        pair = Configuration.from_positions(np.array([[0.0], [1.0]]))
        assert [str(k) for k in pair.labels] == ["1", "2"]

    def test_labels_must_form_antichain(self):
        with pytest.raises(ValueError):
            Configuration.from_items([((1,), [0.0]), ((1, 2), [1.0])])

    def test_duplicate_label_rejected(self):
        with pytest.raises(ValueError):
            Configuration.from_items([("1", [0.0]), ("1", [1.0])])

    def test_d_E_examples(self):
        e = Configuration.from_items([("1", [0.0]), ("2", [1.0])])
        moved = Configuration.from_items([("1", [0.5]), ("2", [1.0])])
        far = Configuration.from_items([("1", [7.0]), ("2", [1.0])])
        assert d_E(e, e) == 0.0
        assert d_E(e, moved) == pytest.approx(0.5)
        # one truncated move plus one label in the symmetric difference
        extra = Configuration.from_items([("1", [7.0]), ("2", [1.0]), ("3", [0.0])])
        assert d_E(e, far) == pytest.approx(1.0)
        assert d_E(e, extra) == pytest.approx(2.0)

    def test_d_E_against_empty_counts_particles(self):
        e = Configuration.from_items([("1", [0.0]), ("2", [1.0])])
        assert d_E(e, Configuration.empty(1)) == 2.0

    def test_d_E_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            d_E(Configuration.empty(1), Configuration.empty(2))

    def test_spatial_marginal(self):
        e = Configuration.from_items([("1", [1.0]), ("2", [3.0])])
        m = config_to_measure(e)
        assert m.total_mass == 2.0
        assert integrate(m.scaled(0.5), lambda x: x[:, 0]) == pytest.approx(2.0)

    def test_configuration_sum_is_label_aware(self):
        e = Configuration.from_items([("1", [1.0]), ("2.1", [3.0])])
        total = configuration_sum(e, lambda k, x: k.depth * float(x[0]))
        assert total == pytest.approx(1.0 + 6.0)


class TestMeasureFile:
    """Test the line-oriented measure format."""

    def test_parse_with_comments(self):
        m = parse_measure("# header\n0.5 1.0\n\n0.5 3.0  # tail\n")
        assert m == AtomicMeasure.from_atoms([([1.0], 0.5), ([3.0], 0.5)])

    def test_empty_file_with_dimension(self):
        assert parse_measure("# nothing\n", dim=2) == AtomicMeasure.zero(2)

    def test_empty_file_without_dimension(self):
        with pytest.raises(DimensionError):
            parse_measure("")

    def test_bad_token_reports_line(self):
        with pytest.raises(ConfigError) as exc:
            parse_measure("1.0 0.0\n1.0 abc\n")
        assert exc.value.line == 2
        assert exc.value.diagnostic().startswith("error[config]: line 2:")

    def test_negative_weight_reports_line(self):
        with pytest.raises(ConfigError):
            parse_measure("-1.0 0.0\n")

    def test_ragged_dimension(self):
        with pytest.raises(DimensionError):
            parse_measure("1.0 0.0\n1.0 0.0 1.0\n")

    def test_write_then_read(self, tmp_path):
        m = AtomicMeasure.from_atoms([([0.1, -2.0], 1.5), ([3.0, 0.25], 0.125)])
        path = write_measure(m, tmp_path / "nested" / "nu.txt", header="initial")
        assert path.read_text().startswith("# initial\n")
        assert read_measure(path) == m
        assert format_measure(read_measure(path)) == format_measure(m)

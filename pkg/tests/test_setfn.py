from itertools import chain, combinations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from smile.setfn import (
    ClassPartition,
    GroundSetTooLarge,
    SetFunctionDomainError,
    SetFunctionSpec,
    check_monotonicity,
    check_submodularity,
    facility_location,
    generic_mutual_information,
    graph_cut,
    subset_values,
    total_information,
)

FL = SetFunctionSpec("facility_location")


def powerset(items):
    items = list(items)
    return [frozenset(c) for c in chain.from_iterable(combinations(items, r) for r in range(len(items) + 1))]


def loop_fl(S, A, T):
    return sum(max(S[i][j] for j in A) for i in T) if A else 0.0


def loop_gc(S, A, T, lam):
    return sum(S[i][j] for i in A for j in T) - lam * sum(S[i][j] for i in A for j in A)


def random_s(seed, n):
    a = np.random.default_rng(seed).random((n, n))
    s = (a + a.T) / 2
    np.fill_diagonal(s, 1.0)
    return s


class TestFacilityLocation:
    def test_hand_value(self, s3):
        assert facility_location(s3, {0, 1}, {0, 1, 2}) == pytest.approx(2.2, abs=1e-12)

    def test_full_set_is_trace(self, s3):
        assert facility_location(s3, range(3)) == pytest.approx(np.trace(s3), abs=1e-12)

    def test_empty_set_undefined(self, s3):
        with pytest.raises(SetFunctionDomainError):
            facility_location(s3, [])

    def test_set_outside_ground(self, s3):
        with pytest.raises(SetFunctionDomainError):
            facility_location(s3, [2], [0, 1])

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 10_000), n=st.integers(1, 7), data=st.data())
    def test_matches_loop(self, seed, n, data):
        s = random_s(seed, n)
        a = data.draw(st.sets(st.integers(0, n - 1), min_size=1))
        assert facility_location(s, a) == pytest.approx(loop_fl(s, a, range(n)), abs=1e-12)


class TestGraphCut:
    def test_full_sum_hand_value(self, s3):
        assert graph_cut(s3, {0}, lam=1.0) == pytest.approx(0.9, abs=1e-12)

    def test_cut_hand_value(self, s3):
        assert graph_cut(s3, {0}, lam=1.0, form="cut") == pytest.approx(-0.1, abs=1e-12)

    @pytest.mark.parametrize("form", ["full_sum", "cut"])
    def test_empty_is_zero(self, s3, form):
        assert graph_cut(s3, [], form=form) == 0.0

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 10_000), n=st.integers(1, 7), lam=st.floats(0, 2), data=st.data())
    def test_matches_loop(self, seed, n, lam, data):
        s = random_s(seed, n)
        a = data.draw(st.sets(st.integers(0, n - 1)))
        assert graph_cut(s, a, lam=lam) == pytest.approx(loop_gc(s, a, range(n), lam), abs=1e-12)

    def test_unknown_form(self, s3):
        with pytest.raises(ValueError):
            graph_cut(s3, [0], form="ratio")


class TestTotalAndGenericMI:
    def test_single_class_fl(self, s3):
        p = ClassPartition({0: [0, 1, 2]})
        assert total_information(s3, p, FL) == pytest.approx(facility_location(s3, range(3), range(3)))

    def test_two_singletons_gc(self, s3):
        p = ClassPartition({0: [0], 1: [1]})
        assert total_information(s3, p, SetFunctionSpec("graph_cut")) == pytest.approx(1.9, abs=1e-12)

    def test_relabelled_classes(self, s3):
        gc = SetFunctionSpec("graph_cut", 0.5)
        a = total_information(s3, ClassPartition({0: [0], 1: [1, 2]}), gc)
        b = total_information(s3, ClassPartition({7: [1, 2], 3: [0]}), gc)
        assert a == pytest.approx(b, abs=1e-15)

    def test_generic_gc_hand_value(self, s3):
        gc = SetFunctionSpec("graph_cut", 1.0)
        assert generic_mutual_information(s3, gc, {0}, {1}) == pytest.approx(1.6, abs=1e-12)

    def test_generic_gc_empty(self, s3):
        gc = SetFunctionSpec("graph_cut", 1.0)
        assert generic_mutual_information(s3, gc, {0, 2}, set()) == pytest.approx(0.0, abs=1e-15)


class TestClassPartition:
    def test_from_labels(self):
        p = ClassPartition.from_labels([0, 1, 0, 2, 2], novel_ids=[2, 9])
        assert p.base_ids == {0, 1} and p.novel_ids == {2}
        np.testing.assert_array_equal(p.sets[2], [3, 4])
        np.testing.assert_array_equal(p.ground, np.arange(5))

    @pytest.mark.parametrize("sets,base,novel", [
        ({0: [0, 1], 1: [1, 2]}, set(), set()),
        ({0: []}, set(), set()),
        ({0: [0], 1: [1]}, {0, 1}, {1}),
        ({0: [0], 1: [1]}, {0}, set()),
    ])
    def test_invalid(self, sets, base, novel):
        with pytest.raises(ValueError):
            ClassPartition(sets, base, novel)


class TestExhaustiveChecks:
    @pytest.mark.parametrize("seed", range(5))
    def test_fl_submodular_monotone(self, seed):
        s = random_s(seed, 6)
        assert check_submodularity(s, FL).passed
        assert check_monotonicity(random_s(seed, 5), FL).passed

    @pytest.mark.parametrize("lam", [0.0, 0.5, 1.0, 1.5])
    def test_gc_full_sum_submodular(self, lam):
        assert check_submodularity(random_s(11, 6), SetFunctionSpec("graph_cut", lam)).passed

    def test_cut_not_monotone(self, s3):
        rep = check_monotonicity(s3, SetFunctionSpec("graph_cut", 1.0, "cut"))
        assert not rep.passed and rep.violations > 0

    def test_supermodular_witness_matches_loop(self):
        c = [0.3, 0.5, 0.2, 0.9]

        def sq(a):
            return sum(c[i] for i in a) ** 2

        rep = check_submodularity(None, sq, T=range(4))
        assert not rep.passed
        x, y = frozenset(rep.witness_X), frozenset(rep.witness_Y)
        assert sq(x) + sq(y) < sq(x | y) + sq(x & y)
        assert rep.margin == pytest.approx(sq(x) + sq(y) - sq(x | y) - sq(x & y))
        # the vectorized count agrees with a loop over all pairs
        subsets = powerset(range(4))
        count = sum(sq(a) + sq(b) - sq(a | b) - sq(a & b) < -1e-9 for a in subsets for b in subsets)
        assert rep.violations == count

    def test_report_text(self):
        rep = check_submodularity(random_s(0, 3), FL)
        assert '"pass": true' in rep.to_text() and '"lambda": null' in rep.to_text()

    def test_too_large(self):
        with pytest.raises(GroundSetTooLarge):
            check_submodularity(random_s(0, 11), FL)

    def test_callable_needs_ground(self):
        with pytest.raises(ValueError):
            subset_values(None, lambda a: 0.0)

    def test_subset_values_bit_order(self, s3):
        vals, t = subset_values(s3, SetFunctionSpec("graph_cut"), T=[0, 2])
        np.testing.assert_array_equal(t, [0, 2])
        assert vals[0b10] == pytest.approx(graph_cut(s3, [2], T=[0, 2]))

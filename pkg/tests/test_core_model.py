import math

import mpmath
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wpcombine import (
    DomainError,
    LogTau,
    WeightedPValues,
    compute_raw_t,
    compute_t,
    h_function,
    log_h_function,
    normalize_inverse_weights,
)
from wpcombine.core_model import LOG_SPACE_THRESHOLD

from conftest import EXAMPLE_C_INVERSE, rel

weights_st = st.lists(st.floats(1e-3, 1e3), min_size=1, max_size=12)
pvals_st = st.floats(1e-300, 1.0)


class TestNormalize:
    def test_equal_weights_give_unit_inverse_weights(self):
        r = normalize_inverse_weights([0.5, 0.5, 0.5])
        assert r.values == (1.0, 1.0, 1.0)

    def test_example_inverse_weights_already_normalized(self):
        r = normalize_inverse_weights([1 / x for x in EXAMPLE_C_INVERSE])
        assert r.values == pytest.approx(EXAMPLE_C_INVERSE, rel=1e-15)

    def test_two_weights(self):
        r = normalize_inverse_weights([2.0, 1.0])
        assert r.values == pytest.approx((2 / 3, 4 / 3), rel=1e-15)
        assert r.index == (0, 1)
        assert r.in_input_order() == r.values

    def test_sorted_with_back_references(self):
        r = normalize_inverse_weights([1.0, 4.0, 2.0])
        assert list(r.values) == sorted(r.values)
        assert r.index == (1, 2, 0)

    @pytest.mark.parametrize("bad", [0.0, -1.0, math.inf, math.nan])
    def test_rejects_nonpositive_weight_naming_index(self, bad):
        with pytest.raises(DomainError) as exc:
            normalize_inverse_weights([1.0, 2.0, bad])
        assert exc.value.index == 2

    @given(weights_st)
    def test_sums_to_count(self, w):
        r = normalize_inverse_weights(w)
        assert abs(math.fsum(r.values) - len(w)) <= 4 * math.ulp(len(w))
        assert all(v > 0 for v in r.values)

    @given(weights_st, st.sampled_from([1e-3, 0.37, 3.0, 1e3]))
    def test_scale_invariant(self, w, c):
        a = normalize_inverse_weights(w)
        b = normalize_inverse_weights([c * x for x in w])
        for x, y in zip(a.in_input_order(), b.in_input_order()):
            assert abs(x - y) <= 2 * math.ulp(x)


class TestComputeT:
    def test_all_ones(self):
        d = WeightedPValues.from_pvalues([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])
        assert compute_t(d, normalize_inverse_weights(d)).t == 0.0

    def test_two_values_by_hand(self):
        d = WeightedPValues.from_pvalues([0.1, 0.2], [2.0, 1.0])
        t = compute_t(d, normalize_inverse_weights(d))
        assert t.t == pytest.approx(1.5 * math.log(10) + 0.75 * math.log(5), rel=1e-15)
        # normalized weights are (1.5, 0.75): tau_G = 0.1**1.5 * 0.2**0.75
        assert t.tau == pytest.approx(0.1**1.5 * 0.2**0.75, rel=1e-14)

    def test_raw_statistic_uses_weights_as_given(self, example_b):
        assert compute_raw_t(example_b).tau == pytest.approx(4.30656e-7, rel=1e-5)

    def test_zero_pvalue_rejected(self):
        d = WeightedPValues.from_pvalues([0.5, 0.0], [1.0, 1.0])
        with pytest.raises(DomainError, match="supply log_p finite"):
            compute_t(d, normalize_inverse_weights(d))

    def test_log_p_below_double_range(self):
        d = WeightedPValues.from_log_pvalues([-1000.0, -2000.0], [1.0, 1.0])
        t = compute_t(d, normalize_inverse_weights(d))
        assert t.t == 3000.0
        with pytest.raises(OverflowError):
            t.tau

    def test_invalid_items(self):
        with pytest.raises(DomainError):
            WeightedPValues.from_pvalues([1.5], [1.0])
        with pytest.raises(DomainError):
            WeightedPValues.from_pvalues([0.5], [0.0])
        with pytest.raises(DomainError):
            WeightedPValues.from_pvalues([], [])
        with pytest.raises(DomainError):
            LogTau(-1.0)

    @given(st.lists(st.tuples(pvals_st, st.floats(1e-2, 1e2)), min_size=1, max_size=10),
           st.sampled_from([1e-3, 7.0, 1e3]))
    def test_invariant_under_weight_rescaling(self, items, c):
        p, w = zip(*items)
        a = WeightedPValues.from_pvalues(p, w)
        b = WeightedPValues.from_pvalues(p, [c * x for x in w])
        ta = compute_t(a, normalize_inverse_weights(a)).t
        tb = compute_t(b, normalize_inverse_weights(b)).t
        assert abs(ta - tb) <= 1e-12 * max(ta, 1e-300)

    @given(st.lists(st.tuples(pvals_st, st.floats(1e-2, 1e2)), min_size=2, max_size=10), st.randoms())
    def test_permutation(self, items, random):
        shuffled = list(items)
        random.shuffle(shuffled)
        a = WeightedPValues.from_pvalues(*zip(*items))
        b = WeightedPValues.from_pvalues(*zip(*shuffled))
        ra, rb = normalize_inverse_weights(a), normalize_inverse_weights(b)
        assert sorted(ra.values) == sorted(rb.values)
        ta, tb = compute_t(a, ra).t, compute_t(b, rb).t
        assert abs(ta - tb) <= 4 * math.ulp(ta)


class TestH:
    def test_zero_argument(self):
        for n in (0, 1, 7, 50):
            assert h_function(0.0, n) == 1.0

    def test_n_zero_is_exponential(self):
        # H(x, 0) = exp(-x); the value 1 sometimes quoted for it is wrong
        for x in (0.1, 3.0, 40.0):
            assert h_function(x, 0) == pytest.approx(math.exp(-x), rel=1e-15)

    def test_fisher_pair(self):
        x = math.log(400)
        assert h_function(x, 1) == pytest.approx(0.0025 * (1 + x), rel=1e-14)
        assert h_function(x, 1) == pytest.approx(0.0174787, abs=5e-8)

    @pytest.mark.parametrize("x", [0.5, 5.0, 50.0])
    @pytest.mark.parametrize("n", [0, 3, 10])
    def test_matches_regularized_incomplete_gamma(self, x, n):
        with mpmath.workdps(40):
            expected = float(mpmath.gammainc(n + 1, x, regularized=True))
        assert rel(h_function(x, n), expected) < 1e-12
        assert log_h_function(x, n) == pytest.approx(math.log(expected), rel=1e-13)

    @pytest.mark.parametrize("n", [0, 5, 30, 60])
    def test_continuous_at_log_space_switch(self, n):
        below = h_function(LOG_SPACE_THRESHOLD, n)
        above = h_function(math.nextafter(LOG_SPACE_THRESHOLD, math.inf), n)
        assert rel(above, below) < 1e-13
        with mpmath.workdps(40):
            expected = float(mpmath.gammainc(n + 1, LOG_SPACE_THRESHOLD, regularized=True))
        assert rel(below, expected) < 1e-12

    def test_huge_argument_stays_finite_in_log_space(self):
        with mpmath.workdps(40):
            expected = float(mpmath.log(mpmath.gammainc(21, 2000, regularized=True)))
        assert log_h_function(2000.0, 20) == pytest.approx(expected, rel=1e-13)
        assert h_function(2000.0, 20) == 0.0

    def test_large_order(self):
        with mpmath.workdps(40):
            expected = float(mpmath.gammainc(401, 350.0, regularized=True))
        assert rel(h_function(350.0, 400), expected) < 1e-12

    @settings(max_examples=200)
    @given(st.floats(0, 200), st.floats(0, 200), st.integers(0, 40))
    def test_monotone_in_x(self, x1, x2, n):
        lo, hi = sorted((x1, x2))
        assert 0.0 <= h_function(hi, n) <= h_function(lo, n) * (1 + 1e-13) <= 1.0 + 1e-13

    @given(st.floats(0, 200), st.integers(0, 40))
    def test_monotone_in_n(self, x, n):
        assert h_function(x, n) <= h_function(x, n + 1) * (1 + 1e-13)
        assert 0.0 <= h_function(x, n) <= 1.0

    def test_domain(self):
        with pytest.raises(DomainError):
            h_function(-1.0, 2)
        with pytest.raises(DomainError):
            h_function(1.0, -1)

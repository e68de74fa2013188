"""Log-spectral distance and one-way ANOVA"""
import math

import numpy as np
import pytest
from scipy import stats as scipy_stats

from app.errors import InvalidArgumentError
from app.services.stats_service import f_survival, lsd, lsd_batch, one_way_anova


def brute_force_lsd(a, b) -> float:
    total = 0.0
    for x, y in zip(a, b):
        total += (x - y) ** 2
    return math.sqrt(total / len(a))


class TestLsd:

    def test_identical_is_zero(self):
        h = np.linspace(-30.0, 5.0, 173)
        assert lsd(h, h) == 0.0

    def test_constant_offset(self):
        assert lsd(np.zeros(173), np.full(173, 20.0)) == pytest.approx(20.0, rel=1e-12)

    def test_two_bin_example(self):
        assert lsd(np.array([0.0, 6.0]), np.array([3.0, 2.0])) == pytest.approx(3.5355339059327378, rel=1e-12)

    def test_matches_brute_force(self, rng):
        for _ in range(200):
            a = rng.normal(-20.0, 10.0, 173)
            b = rng.normal(-20.0, 10.0, 173)
            assert lsd(a, b) == pytest.approx(brute_force_lsd(a, b), rel=1e-12)

    def test_symmetric_and_shift_invariant(self, rng):
        a = rng.normal(size=173)
        b = rng.normal(size=173)
        assert lsd(a, b) == pytest.approx(lsd(b, a), rel=1e-15)
        assert lsd(a + 7.5, b + 7.5) == pytest.approx(lsd(a, b), rel=1e-9)

    def test_triangle_inequality(self, rng):
        for _ in range(50):
            a, b, c = rng.normal(size=(3, 173))
            assert lsd(a, c) <= lsd(a, b) + lsd(b, c) + 1e-12

    def test_sub_range(self):
        a = np.zeros(10)
        b = np.zeros(10)
        b[7:] = 4.0
        assert lsd(a, b, 7, 9) == pytest.approx(4.0)
        assert lsd(a, b, 0, 6) == 0.0

    @pytest.mark.parametrize("k1,k2", [(-1, 5), (5, 4), (0, 10)])
    def test_bad_range(self, k1, k2):
        with pytest.raises(InvalidArgumentError):
            lsd(np.zeros(10), np.zeros(10), k1, k2)

    def test_non_finite(self):
        a = np.zeros(10)
        a[3] = np.nan
        with pytest.raises(InvalidArgumentError):
            lsd(a, np.zeros(10))

    def test_batch(self, rng):
        a = rng.normal(size=(6, 173))
        b = rng.normal(size=(6, 173))
        np.testing.assert_allclose(lsd_batch(a, b), [lsd(x, y) for x, y in zip(a, b)], rtol=1e-14)


class TestAnova:

    def test_worked_example(self):
        result = one_way_anova([1.0, 2.0, 3.0], [2.0, 3.0, 4.0])
        assert result.f_stat == pytest.approx(1.5, rel=1e-12)
        assert (result.df_between, result.df_within) == (1, 4)
        assert result.p_value == pytest.approx(0.2879, abs=1e-4)
        assert result.p_value == pytest.approx(scipy_stats.f.sf(1.5, 1, 4), rel=1e-9)

    def test_identical_groups(self):
        result = one_way_anova([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
        assert result.f_stat == 0.0
        assert result.p_value == pytest.approx(1.0)

    def test_zero_variance_equal_means(self):
        result = one_way_anova([2.0, 2.0], [2.0, 2.0, 2.0])
        assert result.f_stat == 0.0 and result.p_value == 1.0
        assert not result.infinite_f

    def test_zero_variance_unequal_means(self):
        result = one_way_anova([1.0, 1.0], [2.0, 2.0])
        assert result.infinite_f
        assert math.isinf(result.f_stat) and result.p_value == 0.0

    def test_two_groups_match_t_test(self, rng):
        for _ in range(100):
            a = rng.normal(0.0, 1.0, int(rng.integers(2, 30)))
            b = rng.normal(0.3, 1.5, int(rng.integers(2, 30)))
            result = one_way_anova(a, b)
            t, p = scipy_stats.ttest_ind(a, b, equal_var=True)
            assert result.f_stat == pytest.approx(t * t, rel=1e-9)
            assert result.p_value == pytest.approx(p, rel=1e-7, abs=1e-12)

    def test_matches_scipy_f_oneway(self, rng):
        for _ in range(50):
            groups = [rng.normal(m, 1.0, 12) for m in (0.0, 0.2, 0.5)]
            result = one_way_anova(*groups)
            reference = scipy_stats.f_oneway(*groups)
            assert result.f_stat == pytest.approx(reference.statistic, rel=1e-9)
            assert result.p_value == pytest.approx(reference.pvalue, rel=1e-7, abs=1e-12)
            assert (result.df_between, result.df_within) == (2, 33)

    def test_order_invariant(self, rng):
        a = rng.normal(size=15)
        b = rng.normal(size=11)
        forward = one_way_anova(a, b)
        shuffled = one_way_anova(rng.permutation(b), rng.permutation(a))
        assert shuffled.f_stat == pytest.approx(forward.f_stat, rel=1e-12)

    def test_too_few_values(self):
        with pytest.raises(InvalidArgumentError):
            one_way_anova([1.0], [2.0, 3.0])

    def test_single_group(self):
        with pytest.raises(InvalidArgumentError):
            one_way_anova([1.0, 2.0])

    def test_non_finite(self):
        with pytest.raises(InvalidArgumentError):
            one_way_anova([1.0, np.inf], [2.0, 3.0])

    def test_survival_edges(self):
        assert f_survival(0.0, 2, 10) == pytest.approx(1.0)
        assert f_survival(float("inf"), 2, 10) == 0.0

import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from affact.stats import (
    TooFewPairsError, ZeroVarianceError, betainc_reg, paired_ttest, t_cdf, t_sf_two_sided,
)

mpmath.mp.dps = 40


def mp_paired(a, b):
    """High-precision paired t-test: t from exact sums, p from mpmath's incomplete beta."""
    d = [mpmath.mpf(x) - mpmath.mpf(y) for x, y in zip(a, b)]
    n = len(d)
    mean = mpmath.fsum(d) / n
    var = mpmath.fsum((x - mean) ** 2 for x in d) / (n - 1)
    t = mean / mpmath.sqrt(var / n)
    df = n - 1
    p = mpmath.betainc(df / mpmath.mpf(2), mpmath.mpf(1) / 2, 0, df / (df + t * t), regularized=True)
    return float(t), float(p)


def test_matches_high_precision_oracle_on_random_fixtures(rng):
    for n in range(2, 52):
        a = rng.normal(10, 3, n)
        b = a + rng.normal(rng.uniform(-1, 1), rng.uniform(0.1, 2), n)
        res = paired_ttest(a, b)
        t, p = mp_paired(a, b)
        assert res.t == pytest.approx(t, rel=1e-9, abs=1e-9)
        assert abs(res.p - p) < 1e-6
        assert res.df == n - 1


def test_ten_pair_fixture():
    a = [8.12, 8.40, 7.95, 9.01, 8.33, 8.76, 8.05, 8.61, 8.27, 8.90]
    b = [8.05, 8.31, 7.99, 8.80, 8.21, 8.70, 8.01, 8.44, 8.30, 8.71]
    t, p = mp_paired(a, b)
    res = paired_ttest(a, b)
    assert abs(res.t - t) < 1e-6 and abs(res.p - p) < 1e-6


def test_symmetric_differences_give_p_one():
    res = paired_ttest([1, 0, 1, 0], [0, 1, 0, 1])
    assert res.t == 0 and res.p == 1.0


def test_swapping_negates_t():
    a, b = [1.0, 2.5, 3.1, 4.7], [0.5, 2.0, 3.3, 4.0]
    ab, ba = paired_ttest(a, b), paired_ttest(b, a)
    assert ab.t == -ba.t and ab.p == ba.p


def test_degenerate_inputs():
    with pytest.raises(ZeroVarianceError) as info:
        paired_ttest([1, 2, 3], [1, 2, 3])
    assert info.value.code == "zero-variance"
    with pytest.raises(ZeroVarianceError):
        paired_ttest([2, 3, 4], [1, 2, 3])
    with pytest.raises(TooFewPairsError) as info:
        paired_ttest([1], [2])
    assert info.value.code == "too-few-pairs"


@pytest.mark.parametrize("a, b, x", [(0.5, 1.5, 0.01), (0.5, 10, 0.2), (20, 0.5, 0.97), (3, 4, 0.5),
                                     (50, 50, 0.45), (0.5, 0.5, 0.999), (1, 1, 0.3)])
def test_betainc_against_mpmath(a, b, x):
    ref = float(mpmath.betainc(a, b, 0, x, regularized=True))
    assert betainc_reg(a, b, x) == pytest.approx(ref, rel=1e-10, abs=1e-14)


@given(st.floats(-30, 30), st.integers(1, 60))
def test_t_cdf_against_mpmath(t, df):
    with mpmath.workdps(40):
        tm = mpmath.mpf(t)
        tail = mpmath.betainc(mpmath.mpf(df) / 2, 0.5, 0, df / (df + tm * tm), regularized=True) / 2
    ref = float(1 - tail if t >= 0 else tail)
    assert abs(t_cdf(t, df) - ref) < 1e-8


def test_p_values_in_unit_interval(rng):
    for _ in range(100):
        n = int(rng.integers(2, 30))
        p = paired_ttest(rng.normal(size=n), rng.normal(size=n)).p
        assert 0 < p <= 1


def test_sf_edge_cases():
    assert t_sf_two_sided(0.0, 5) == 1.0
    assert t_sf_two_sided(math.inf, 5) == 0.0
    # One degree of freedom is the Cauchy distribution.
    assert t_sf_two_sided(1.0, 1) == pytest.approx(0.5, abs=1e-12)

import mpmath as mp
import numpy as np
import pytest

from bifbm import asymptotics as asy
from bifbm.cov_kernels import ModelParams, f_a, noise_cov

PARAMS = [(0.6, 0.8), (0.3, 0.5), (0.8, 0.9)]


def _mp_fa(H, K, a, n):
    mp.mp.dps = 60
    H, K = mp.mpf(H), mp.mpf(K)
    F = lambda x, y: (mp.mpf(x) ** (2 * H) + mp.mpf(y) ** (2 * H)) ** K  # noqa: E731
    return float(F(a + 1, a + n + 1) - F(a, a + n + 1) - F(a + 1, a + n) + F(a, a + n))


@pytest.mark.parametrize("H, K", PARAMS)
def test_increment_variance_matches_mpmath(H, K):
    mp.mp.dps = 60
    h, t = 10**5, 1
    Hm, Km = mp.mpf(H), mp.mpf(K)
    ref = mp.gamma(1 - Km) / Km * (2 * ((h + t) ** (2 * Hm) + h ** (2 * Hm)) ** Km - 2**Km * ((h + t) ** (2 * Hm * Km) + h ** (2 * Hm * Km)))
    got = asy.xhk_increment_var_exact(ModelParams(H, K), h, t)
    assert got == pytest.approx(float(ref), rel=1e-8)


@pytest.mark.parametrize("H, K", PARAMS)
def test_f_a_large_a_matches_mpmath(H, K):
    got = f_a(ModelParams(H, K), 1e6, 2)
    assert got == pytest.approx(_mp_fa(H, K, 10**6, 2), rel=1e-8)


@pytest.mark.parametrize("H, K", PARAMS)
def test_prop22_rate(H, K):
    rep = asy.rate_experiment("prop22", ModelParams(H, K))
    assert rep.passed
    assert rep.r_squared > 0.9999


@pytest.mark.parametrize("H, K", PARAMS)
def test_thm31_ratio_limits(H, K):
    p = ModelParams(H, K)
    nominal = asy.rate_experiment("thm31", p)
    # the nominal constant is off by 2^{K-1}; the Taylor constant is exact
    assert nominal.ratios[-1] == pytest.approx(2 ** (K - 1), rel=1e-3)
    assert nominal.slope_ok
    taylor = asy.rate_experiment("thm31", p, constant="taylor")
    assert taylor.passed
    assert taylor.ratios[-1] == pytest.approx(1.0, abs=1e-3)


@pytest.mark.parametrize("H, K, a", [(0.7, 0.8, 1), (0.7, 0.8, 5), (0.3, 0.9, 1), (0.3, 0.9, 5)])
def test_thm41_ratio_limits(H, K, a):
    p = ModelParams(H, K)
    nominal = asy.rate_experiment("thm41", p, a=a)
    assert nominal.ratios[-1] == pytest.approx(2.0, rel=2e-3)
    taylor = asy.rate_experiment("thm41", p, a=a, constant="taylor")
    assert taylor.ratios[-1] == pytest.approx(1.0, abs=2e-3)
    assert taylor.slope_ok


def test_cauchy_schwarz_bound():
    p = ModelParams(0.6, 0.8)
    a = np.arange(1, 50)
    lhs, rhs = asy.xhk_noise_cauchy_schwarz(p, a, 3)
    assert np.all(lhs <= rhs * (1 + 1e-12))


def test_dominant_term_and_lrd():
    assert asy.dominant_term_class(ModelParams(0.7, 0.8)) is asy.DominantTerm.QUADRATIC_DECAY
    assert asy.dominant_term_class(ModelParams(0.3, 0.9)) is asy.DominantTerm.MIXED_DECAY
    assert asy.dominant_term_class(ModelParams(0.5, 0.9)) is asy.DominantTerm.BOUNDARY
    assert asy.lrd_classify(ModelParams(0.8, 0.8)) is asy.SeriesClass.DIVERGENT
    assert asy.lrd_classify(ModelParams(0.5, 0.8)) is asy.SeriesClass.CONVERGENT


def test_partial_sums_are_cumulative():
    p = ModelParams(0.6, 0.8)
    s = asy.noise_partial_sums(p, 2, [0, 5, 10])
    direct = np.cumsum(noise_cov(p, 2, np.arange(11.0)))
    np.testing.assert_allclose(s, direct[[0, 5, 10]])


def test_partial_sum_growth_follows_power_law():
    # divergent case: S(N) - S(N/10) scales like N^{2HK-1}
    p = ModelParams(0.8, 0.8)
    s = asy.noise_partial_sums(p, 1, [10**3, 10**4, 10**5])
    inc = np.diff(s)
    assert inc[1] / inc[0] == pytest.approx(10 ** (2 * p.HK - 1), rel=0.02)


def test_loglog_slope_exact_power():
    x = np.array([1.0, 10.0, 100.0])
    slope, intercept, r2 = asy.loglog_slope(x, 3 * x**-0.7)
    assert slope == pytest.approx(-0.7)
    assert np.exp(intercept) == pytest.approx(3.0)
    assert r2 == pytest.approx(1.0)
    with pytest.raises(ValueError):
        asy.loglog_slope(x, np.array([1.0, -1.0, 1.0]))


def test_rejects_bad_target_and_constant():
    p = ModelParams(0.6, 0.8)
    with pytest.raises(ValueError):
        asy.rate_experiment("thm99", p)
    with pytest.raises(ValueError):
        asy.fa_leading(p, 10.0, constant="other")

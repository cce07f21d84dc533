import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bifbm import limit_theorems as lt
from bifbm.cov_kernels import ModelParams, bifbm_cov, g_density
from bifbm.errors import ConfigurationError, ParameterError, QuadratureError
from bifbm.hermite import PolyFunction, hermite_coeffs

P = ModelParams(0.8, 0.75)


def test_xi_matrix_structure():
    xi = lt.build_xi_cov(P, 32)
    m = xi.entries
    np.testing.assert_array_equal(np.diag(m), 1.0)
    np.testing.assert_array_equal(m, m.T)
    assert m[2, 6] == pytest.approx(g_density(P, 3.0, 7.0))
    assert not xi.psd_repair["clip_applied"]
    assert xi.psd_repair["min_eig_before"] > 0


def test_requires_long_memory():
    with pytest.raises(ParameterError, match="2HK > 1"):
        lt.build_xi_cov(ModelParams(0.5, 0.8), 16)


def test_repair_small_violation():
    m = np.array([[1.0, 0.9, 0.9], [0.9, 1.0, -0.1], [0.9, -0.1, 1.0]])
    assert np.linalg.eigvalsh(m)[0] < 0
    fixed, info = lt.repair_correlation(m, frobenius_budget=0.2)
    assert info["clip_applied"]
    np.testing.assert_allclose(np.diag(fixed), 1.0)
    assert np.linalg.eigvalsh(fixed)[0] > -1e-12
    with pytest.raises(ConfigurationError, match="PSD repair"):
        lt.repair_correlation(m, frobenius_budget=1e-4)


def test_partial_sum_cov_brute_force():
    n = 12
    xi = lt.build_xi_cov(P, n)
    t, s = 0.75, 0.5
    total = 0.0
    for i in range(1, 10):
        for j in range(1, 7):
            total += 1.0 if i == j else float(g_density(P, float(i), float(j)))
    assert lt.exact_partial_sum_cov(xi, t, s) == pytest.approx(total * n ** (-2 * P.HK), rel=1e-13)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.6, 0.95), st.floats(0.7, 0.99), st.sampled_from([16, 40, 64]), st.floats(0.1, 1.0), st.floats(0.1, 1.0))
def test_riemann_scaling(H, K, n, t, s):
    # homogeneity of g: I_n = n^{-2HK} min([nt],[ns]) + Riemann sum
    p = ModelParams(H, K)
    if not p.lrd:
        return
    xi = lt.build_xi_cov(p, n)
    diag = min(lt._count(n, t), lt._count(n, s)) * n ** (-2 * p.HK)
    assert lt.exact_partial_sum_cov(xi, t, s) == pytest.approx(diag + lt.riemann_sum(p, t, s, n), rel=1e-10, abs=1e-14)


def test_functional_cov_reduces_to_linear():
    xi = lt.build_xi_cov(P, 64)
    lin = hermite_coeffs(PolyFunction.parse("hermite:0,1"))
    assert lt.exact_functional_cov(xi, lin, 1.0, 0.5) == pytest.approx(lt.exact_partial_sum_cov(xi, 1.0, 0.5))
    assert lt.remainder_J(xi, lin, 1.0) == 0.0


def test_remainder_decreases():
    e = hermite_coeffs(PolyFunction.parse("hermite:0,1,0.5"))
    J = [lt.remainder_J(lt.build_xi_cov(P, n), e, 1.0) for n in (64, 128, 256)]
    assert J[0] > J[1] > J[2] > 0


def test_partial_sum_paths_match_finite_n():
    xi = lt.build_xi_cov(P, 64)
    ens = lt.partial_sum_paths(P, 64, (0.5, 1.0), 20000, seed=3, xi=xi)
    assert ens.values.shape == (20000, 2)
    est = ens.values.T @ ens.values / 20000
    se = np.sqrt(np.mean(ens.values[:, 1] ** 4) / 20000)
    assert abs(est[1, 1] - lt.exact_partial_sum_cov(xi, 1.0, 1.0)) < 4 * se
    again = lt.partial_sum_paths(P, 64, (0.5, 1.0), 20000, seed=3, xi=xi, workers=3)
    np.testing.assert_array_equal(ens.values, again.values)


def test_partial_sum_paths_rejects_bad_grid():
    with pytest.raises(ValueError):
        lt.partial_sum_paths(P, 16, (0.5, 1.5), 10, seed=0)


def test_prop61_report_fields():
    rep = lt.prop61_experiment(P, (32, 64), (0.5, 1.0), 4000, seed=1)
    d = rep.diagnostics
    assert len(d["deterministic"]) == 3
    assert d["mc_pass_vs_finite_n"]
    assert rep.to_dict()["psd_repair"]["64"]["clip_applied"] is False


def test_prop62_rejects_rank_two():
    with pytest.raises(ParameterError):
        lt.prop62_experiment(P, PolyFunction.parse("hermite:0,0,1"), n_values=(16, 32), m_paths=100)


@pytest.mark.parametrize("t, s", [(1.0, 1.0), (1.0, 2.0), (0.5, 2.0)])
def test_lemma62_closed_form(t, s):
    num, closed, gap = lt.lemma62_quadrature(P, t, s)
    assert closed == pytest.approx(bifbm_cov(P, t, s))
    assert gap < 1e-8


def test_lemma62_at_k_one():
    num, closed, gap = lt.lemma62_quadrature(ModelParams(0.7, 1.0), 1.0, 2.0)
    assert gap < 1e-8


def test_lemma62_reports_achieved_gap():
    with pytest.raises(QuadratureError) as info:
        lt.lemma62_quadrature(P, 1.0, 2.0, rel_tol=1e-17)
    assert 0 < info.value.achieved_gap < 1e-8

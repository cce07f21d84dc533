import json

import numpy as np
import pytest

from bifbm import ensemble_io, streams
from bifbm import cov_kernels as ck
from bifbm import sampler as sm
from bifbm.errors import ConfigurationError, NotPositiveSemidefinite
from bifbm.reports import CovarianceRow, ExperimentReport, to_json, write_atomic


def test_time_grid_validation():
    g = sm.TimeGrid([1, 2, 3], include_origin=True)
    np.testing.assert_array_equal(g.times, [0, 1, 2, 3])
    assert len(g) == 4
    for bad in ([0, 1], [2, 1], []):
        with pytest.raises(ValueError):
            sm.TimeGrid(bad)


def test_factor_psd_plain_cholesky():
    m = np.array([[2.0, 1.0], [1.0, 2.0]])
    L, eps = sm.factor_psd(m)
    assert eps == 0.0
    np.testing.assert_allclose(L @ L.T, m, rtol=1e-15)


def test_factor_psd_singular_gets_small_jitter():
    v = np.array([1.0, 2.0, 3.0])
    m = np.outer(v, v)
    L, eps = sm.factor_psd(m)
    assert 0 < eps <= sm.PSD_TOL * np.trace(m) / 3
    np.testing.assert_allclose(L @ L.T, m + eps * np.eye(3), atol=1e-12)


def test_factor_psd_refuses_indefinite():
    with pytest.raises(NotPositiveSemidefinite) as info:
        sm.factor_psd(np.array([[1.0, 2.0], [2.0, 1.0]]))
    assert info.value.min_eigenvalue == pytest.approx(-1.0)
    with pytest.raises(ValueError):
        sm.factor_psd(np.array([[1.0, 0.5], [0.0, 1.0]]))


def test_sample_shapes_and_origin():
    k = ck.make_kernel("bifbm", H=0.6, K=0.8)
    ens = sm.sample_process(k, sm.TimeGrid([1, 2], include_origin=True), 10, seed=3)
    assert ens.values.shape == (10, 3)
    assert np.all(ens.values[:, 0] == 0)
    empty = sm.sample_process(k, sm.TimeGrid([1, 2]), 0, seed=3)
    assert empty.values.shape == (0, 2)


def test_determinism_independent_of_workers():
    k = ck.make_kernel("bifbm", H=0.6, K=0.8)
    g = sm.TimeGrid(np.arange(1, 9))
    m = 3 * streams.BLOCK_ROWS + 17
    a = sm.sample_process(k, g, m, seed=11, workers=1).values
    b = sm.sample_process(k, g, m, seed=11, workers=4).values
    np.testing.assert_array_equal(a, b)
    c = sm.sample_process(k, g, m, seed=12).values
    assert not np.array_equal(a, c)


def test_prefix_stability():
    # fewer paths give a prefix of more paths
    k = ck.make_kernel("fbm_one_sided", hurst=0.3)
    g = sm.TimeGrid([0.5, 1.0])
    big = sm.sample_process(k, g, 5000, seed=9).values
    small = sm.sample_process(k, g, 100, seed=9).values
    np.testing.assert_array_equal(big[:100], small)


def test_seed_range():
    with pytest.raises(ValueError):
        streams.check_seed(-1)
    with pytest.raises(ValueError):
        streams.check_seed(2**64)
    assert 0 <= streams.fresh_seed() <= streams.SEED_MAX


def test_empirical_cov_matches_numpy():
    rng = np.random.default_rng(0)
    v = rng.standard_normal((500, 3))
    est, se = sm.empirical_cov(v)
    np.testing.assert_allclose(est, v.T @ v / 500)
    est2, se2 = sm.empirical_cov(v, [(0, 1), (2, 2)])
    np.testing.assert_allclose(est2, [est[0, 1], est[2, 2]])
    np.testing.assert_allclose(se2, [se[0, 1], se[2, 2]])
    assert se2[0] == pytest.approx(np.std(v[:, 0] * v[:, 1], ddof=1) / np.sqrt(500))


def test_bifbm_sampler_matches_gram():
    p = ck.ModelParams(0.6, 0.8)
    g = sm.TimeGrid([0.5, 1.0, 2.0])
    ens = sm.sample_process(ck.make_kernel("bifbm", H=0.6, K=0.8), g, 40000, seed=5)
    rows = sm.covariance_table(ens.values, ens.times, lambda s, t: ck.bifbm_cov(p, s, t))
    assert max(abs(r.z) for r in rows) < 4.5


def test_decomposition_mc():
    rep = sm.decomposition_mc_check(ck.ModelParams(0.6, 0.8), sm.TimeGrid([1, 2, 3]), 50000, seed=1)
    assert rep.passed, rep.max_abs_z


def test_odd_even_mc_and_swapped_pairing():
    rep = sm.prop51_mc_check(0.6, sm.TimeGrid([0.5, 1, 2]), 50000, seed=2)
    assert rep.passed, rep.max_abs_z
    assert rep.diagnostics["swapped_pairing_max_abs_z"] > 10


def test_xk_integral_mc():
    q = sm.QuadratureSpec.for_horizon(0.5, 2.0, 512)
    rep = sm.xk_integral_mc_check(0.5, sm.TimeGrid([0.5, 1.0, 2.0]), q, 40000, seed=4)
    assert rep.passed, rep.max_abs_z
    assert rep.diagnostics["max_quadrature_rel_error"] < 0.01


def test_quadrature_tail_guard_names_requirement():
    q = sm.QuadratureSpec(theta_max=10.0, nodes=64)
    with pytest.raises(ConfigurationError, match="theta_max >="):
        sm.sample_xk_integral(0.5, sm.TimeGrid([1.0]), q, 10, seed=0)


def test_quadrature_refinement_decreases():
    levels = sm.quadrature_refinement(0.3, [(0.5, 1.0), (2.0, 2.0)])
    errs = [lv["max_rel_error"] for lv in levels]
    assert all(b < a for a, b in zip(errs, errs[1:]))


def test_increment_distance_decreasing_and_zero_for_fbm():
    g = sm.TimeGrid([1, 2, 4])
    d = [sm.increment_kernel_distance(ck.ModelParams(0.6, 0.8), h, g) for h in (1e1, 1e3, 1e5)]
    assert d[0] > d[1] > d[2]
    assert sm.increment_kernel_distance(ck.ModelParams(0.6, 1.0), 10.0, g) == 0.0


@pytest.mark.parametrize("kind", ["csv", "binary"])
def test_ensemble_roundtrip(tmp_path, kind):
    k = ck.make_kernel("xhk", H=0.6, K=0.8)
    ens = sm.sample_process(k, sm.TimeGrid([0.25, 1.0, 3.0], include_origin=True), 7, seed=2**63 + 5)
    if kind == "csv":
        path = ensemble_io.write_csv(ens, tmp_path / "e.csv")
        times, values = ensemble_io.read_csv(path)
        np.testing.assert_array_equal(times, ens.times)
        np.testing.assert_array_equal(values, ens.values)
    else:
        path = ensemble_io.write_binary(ens, tmp_path / "e.bin")
        back = ensemble_io.read_binary(path)
        np.testing.assert_array_equal(back.values, ens.values)
        np.testing.assert_array_equal(back.times, ens.times)
        assert back.seed == ens.seed and back.kernel_name == "xhk"
        assert path.stat().st_size == 40 + 8 * 4 + 8 * 7 * 4


def test_binary_rejects_bad_magic(tmp_path):
    bad = tmp_path / "x.bin"
    bad.write_bytes(b"NOTMAGIC" + bytes(32))
    with pytest.raises(ValueError, match="magic"):
        ensemble_io.read_binary(bad)


def test_report_serialization(tmp_path):
    row = CovarianceRow(1.0, 2.0, 1.1, 1.0, 0.05)
    assert row.z == pytest.approx(2.0)
    rep = ExperimentReport("x", {"H": 0.5}, 1, 10, [row], {"arr": np.arange(2)})
    path = write_atomic(tmp_path / "sub" / "r.json", to_json(rep.to_dict()))
    doc = json.loads(path.read_text())
    assert doc["max_abs_z"] == pytest.approx(2.0)
    assert doc["diagnostics"]["arr"] == [0, 1]
    assert list(tmp_path.joinpath("sub").iterdir()) == [path]

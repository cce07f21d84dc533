"""Partial sums of a correlated Gaussian sequence converging to bifBm.

The sequence xi_1, xi_2, ... is standard normal with E[xi_i xi_j] = g(i, j)
off the diagonal, g the mixed second derivative of the bifBm covariance.
Normalized partial sums S_n(t) = n^{-HK} sum_{j <= [nt]} xi_j should have
covariance approaching bifbm_cov; so should those of eta_j = f(xi_j), up
to the factor c_1^2.

Every Monte Carlo verdict has an exact finite-n counterpart computed from
the correlation matrix itself: I_n for the linear sums and the Hermite
remainder J_n for the nonlinear ones.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from . import streams
from .cov_kernels import ModelParams, bifbm_cov, g_density
from .errors import ConfigurationError, ParameterError, QuadratureError
from .hermite import HermiteExpansion, PolyFunction, hermite, hermite_coeffs, hermite_cross_moment
from .reports import Z_LIMIT, CovarianceRow, ExperimentReport
from .sampler import PathEnsemble, TimeGrid, empirical_cov, factor_psd

FROBENIUS_BUDGET = 0.01
DEFAULT_N = (128, 256, 512)
DEFAULT_M = 20_000
DEFAULT_T_GRID = (0.25, 0.5, 0.75, 1.0)
GAP_TOL = 0.05


@dataclass
class XiCovMatrix:
    params: ModelParams
    entries: np.ndarray
    psd_repair: dict

    @property
    def n(self) -> int:
        return self.entries.shape[0]


def _g_matrix(p, n):
    idx = np.arange(1, n + 1, dtype=float)
    i, j = np.triu_indices(n, k=1)
    m = np.eye(n)
    vals = np.asarray(g_density(p, idx[i], idx[j]))
    m[i, j] = vals
    m[j, i] = vals
    return m


def repair_correlation(m, frobenius_budget: float = FROBENIUS_BUDGET):
    """Clip negative eigenvalues of a correlation matrix and restore the unit diagonal.

    Returns (matrix, info).  The matrix is returned unchanged when already
    PSD.  A repair moving it by more than ``frobenius_budget`` (relative
    Frobenius norm) raises ConfigurationError.
    """
    m = np.asarray(m, dtype=float)
    n = m.shape[0]
    off = m[~np.eye(n, dtype=bool)]
    lam = np.linalg.eigvalsh(m)
    info = {
        "min_eig_before": float(lam[0]),
        "max_eig_before": float(lam[-1]),
        "max_abs_offdiag_before": float(np.abs(off).max()),
        "offdiag_above_one_before": int(np.sum(np.abs(off) > 1.0)),
        "clip_applied": False,
        "frobenius_change": 0.0,
    }
    if lam[0] < 0:
        w, v = np.linalg.eigh(m)
        fixed = (v * np.maximum(w, 0.0)) @ v.T
        d = np.sqrt(np.diag(fixed))
        fixed = fixed / np.outer(d, d)
        fixed = 0.5 * (fixed + fixed.T)
        np.fill_diagonal(fixed, 1.0)
        change = float(np.linalg.norm(fixed - m) / np.linalg.norm(m))
        info.update(clip_applied=True, frobenius_change=change, min_eig_after=float(np.linalg.eigvalsh(fixed)[0]))
        if change > frobenius_budget:
            raise ConfigurationError(
                f"PSD repair changes the correlation matrix by {change:.3%} (> {frobenius_budget:.0%}) at n={n}; "
                "the assumed sequence is not realizable at this size"
            )
        m = fixed
    info["max_abs_offdiag_after"] = float(np.abs(m[~np.eye(n, dtype=bool)]).max())
    return m, info


def build_xi_cov(p: ModelParams, n: int, frobenius_budget: float = FROBENIUS_BUDGET) -> XiCovMatrix:
    """Unit-diagonal matrix with off-diagonal g(i, j), repaired to PSD if needed."""
    p.require_lrd("build_xi_cov")
    if n < 2:
        raise ValueError("need n >= 2")
    m, info = repair_correlation(_g_matrix(p, n), frobenius_budget)
    return XiCovMatrix(p, m, info)


def _count(n, t):
    return int(math.floor(n * t * (1.0 + 1e-12)))


def exact_partial_sum_cov(xi: XiCovMatrix, t: float, s: float) -> float:
    """I_n = n^{-2HK} sum_{i <= [nt]} sum_{j <= [ns]} E[xi_i xi_j]."""
    n = xi.n
    return float(n ** (-2 * xi.params.HK) * xi.entries[: _count(n, t), : _count(n, s)].sum())


def riemann_sum(p: ModelParams, t: float, s: float, n: int) -> float:
    """n^{-2} sum_{i <= [nt], j <= [ns], i != j} g(i/n, j/n)."""
    i = np.arange(1, _count(n, t) + 1, dtype=float)
    j = np.arange(1, _count(n, s) + 1, dtype=float)
    I, J = np.meshgrid(i, j, indexing="ij")
    mask = I != J
    return float(np.asarray(g_density(p, I[mask] / n, J[mask] / n)).sum() / n**2)


def exact_functional_cov(xi: XiCovMatrix, expansion: HermiteExpansion, t: float, s: float, k_min: int = 1) -> float:
    """n^{-2HK} sum_{i <= [nt], j <= [ns]} sum_{k >= k_min} c_k^2 k! r_ij^k.

    k_min=1 gives the covariance of the partial sums of f(xi_j); k_min=2 the
    Hermite remainder J_n (with t == s).
    """
    n = xi.n
    r = xi.entries[: _count(n, t), : _count(n, s)]
    total = np.zeros_like(r)
    weights = expansion.weights()
    for k in range(max(k_min, 1), expansion.k_max + 1):
        if weights[k] != 0.0:
            total += weights[k] * r**k
    return float(n ** (-2 * xi.params.HK) * total.sum())


def remainder_J(xi: XiCovMatrix, expansion: HermiteExpansion, t: float) -> float:
    return exact_functional_cov(xi, expansion, t, t, k_min=2)


def partial_sum_paths(p: ModelParams, n: int, t_grid, m_paths: int, seed: int, f=None, xi: XiCovMatrix = None, workers: int = 1) -> PathEnsemble:
    """Replicates of n^{-HK} sum_{j <= [nt]} f(xi_j) on ``t_grid`` (f = identity by default)."""
    xi = xi if xi is not None else build_xi_cov(p, n)
    if xi.n != n:
        raise ValueError("xi matrix size does not match n")
    grid = TimeGrid(t_grid)
    if grid.array[-1] > 1.0:
        raise ValueError("t_grid must lie in (0, 1]")
    L, _ = factor_psd(xi.entries)
    counts = np.array([_count(n, t) for t in grid.array])
    scale = n ** (-p.HK)

    def transform(z):
        x = z @ L.T
        if f is not None:
            x = f(x)
        c = np.concatenate([np.zeros((x.shape[0], 1)), np.cumsum(x, axis=1)], axis=1)
        return scale * c[:, counts]

    values = streams.generate_rows(seed, 0, m_paths, n, transform, workers)
    if values is None:
        values = np.zeros((0, len(grid)))
    return PathEnsemble(grid, values, streams.check_seed(seed), "partial_sum" if f is None else "functional_partial_sum")


def _pairs(t_grid):
    t_grid = list(t_grid)
    return [(t_grid[i], t_grid[j]) for i in range(len(t_grid)) for j in range(i, len(t_grid))]


def _strictly_decreasing(xs):
    return all(b < a for a, b in zip(xs, xs[1:]))


def _mc_rows(ens, theory):
    times = ens.times
    idx = [(i, j) for i in range(len(times)) for j in range(i, len(times))]
    est, se = empirical_cov(ens.values, idx)
    return [
        CovarianceRow(t=float(times[i]), s=float(times[j]), empirical=float(e), theoretical=float(theory(times[i], times[j])), se=float(q))
        for (i, j), e, q in zip(idx, est, se)
    ]


def _z(rows, ref):
    out = []
    for r in rows:
        v = ref(r.t, r.s)
        out.append((r.empirical - v) / r.se if r.se > 0 else 0.0)
    return out


def prop61_experiment(p: ModelParams, n_values=DEFAULT_N, t_grid=DEFAULT_T_GRID, m_paths=DEFAULT_M, seed=0, workers=1, gap_tol=GAP_TOL) -> ExperimentReport:
    """Deterministic I_n versus bifbm_cov along n, then Monte Carlo at the largest n.

    Passes when every relative gap |I_n / R - 1| strictly shrinks along
    ``n_values``, the final gaps are <= ``gap_tol``, and all MC z-scores
    against bifbm_cov are <= 4.  z-scores against the exact finite-n
    covariance I_n are reported as a sampler check.
    """
    p.require_lrd("prop61_experiment")
    pairs = _pairs(t_grid)
    mats = {n: build_xi_cov(p, n) for n in n_values}
    det = []
    for t, s in pairs:
        target = float(bifbm_cov(p, t, s))
        gaps = [exact_partial_sum_cov(mats[n], t, s) / target - 1.0 for n in n_values]
        det.append({"t": t, "s": s, "target": target, "I_n": [exact_partial_sum_cov(mats[n], t, s) for n in n_values], "rel_gap": gaps, "shrinking": _strictly_decreasing([abs(g) for g in gaps])})
    riemann = [{"n": n, "t": 1.0, "s": 1.0, "value": riemann_sum(p, 1.0, 1.0, n), "target": float(bifbm_cov(p, 1.0, 1.0))} for n in n_values]
    det_shrink = all(d["shrinking"] for d in det)
    final_gap = max(abs(d["rel_gap"][-1]) for d in det)

    n_final = n_values[-1]
    xi = mats[n_final]
    ens = partial_sum_paths(p, n_final, t_grid, m_paths, seed, xi=xi, workers=workers)
    rows = _mc_rows(ens, lambda t, s: bifbm_cov(p, t, s))
    z_finite = _z(rows, lambda t, s: exact_partial_sum_cov(xi, t, s))
    mc_pass = max(abs(r.z) for r in rows) <= Z_LIMIT
    rep = ExperimentReport(
        name="prop61",
        params=p.to_dict(),
        seed=seed,
        m_paths=m_paths,
        table=rows,
        psd_repair={str(n): mats[n].psd_repair for n in n_values},
        tolerances={"final_rel_gap": gap_tol, "max_abs_z": Z_LIMIT},
        diagnostics={
            "n_values": list(n_values),
            "deterministic": det,
            "riemann_sum": riemann,
            "deterministic_shrinking": det_shrink,
            "final_max_rel_gap": final_gap,
            "deterministic_pass": det_shrink and final_gap <= gap_tol,
            "mc_pass_vs_limit": mc_pass,
            "z_vs_finite_n": z_finite,
            "mc_pass_vs_finite_n": max(abs(z) for z in z_finite) <= Z_LIMIT,
        },
    )
    rep.passed = rep.diagnostics["deterministic_pass"] and mc_pass
    return rep


def prop62_experiment(p: ModelParams, f: PolyFunction, k_max=8, n_values=DEFAULT_N, t_grid=DEFAULT_T_GRID, m_paths=DEFAULT_M, seed=0, workers=1) -> ExperimentReport:
    """Partial sums of eta_j = f(xi_j) against c_1^2 bifbm_cov.

    Passes when the MC z-scores at the largest n are <= 4 and the exact
    remainder J_n strictly decreases along ``n_values`` for every t.
    """
    p.require_lrd("prop62_experiment")
    expansion = hermite_coeffs(f, k_max)
    if not expansion.rank_one:
        raise ParameterError("prop62_experiment requires c_1 != 0")
    c1 = expansion.c1
    mats = {n: build_xi_cov(p, n) for n in n_values}
    J = {t: [remainder_J(mats[n], expansion, t) for n in n_values] for t in t_grid}
    J_bound = {t: [t * n ** (1 - 2 * p.HK) * expansion.higher_order_mass for n in n_values] for t in t_grid}
    j_decreasing = all(_strictly_decreasing(v) for v in J.values())

    n_final = n_values[-1]
    xi = mats[n_final]
    ens = partial_sum_paths(p, n_final, t_grid, m_paths, seed, f=f, xi=xi, workers=workers)
    rows = _mc_rows(ens, lambda t, s: c1 * c1 * bifbm_cov(p, t, s))
    z_finite = _z(rows, lambda t, s: exact_functional_cov(xi, expansion, t, s))
    mc_pass = max(abs(r.z) for r in rows) <= Z_LIMIT
    rep = ExperimentReport(
        name="prop62",
        params=p.to_dict(),
        seed=seed,
        m_paths=m_paths,
        table=rows,
        psd_repair={str(n): mats[n].psd_repair for n in n_values},
        tolerances={"max_abs_z": Z_LIMIT},
        diagnostics={
            "expansion": expansion.to_dict(),
            "n_values": list(n_values),
            "J_n": {str(t): v for t, v in J.items()},
            "J_n_diagonal_term": {str(t): v for t, v in J_bound.items()},
            "J_n_decreasing": j_decreasing,
            "mc_pass_vs_limit": mc_pass,
            "z_vs_finite_n": z_finite,
            "mc_pass_vs_finite_n": max(abs(z) for z in z_finite) <= Z_LIMIT,
        },
    )
    rep.passed = mc_pass and j_decreasing
    return rep


# ---------------------------------------------------------------------------
# double integral of the density
# ---------------------------------------------------------------------------


def _segments(lo, hi, cut):
    return [(lo, cut), (cut, hi)] if lo < cut < hi else [(lo, hi)]


def lemma62_quadrature(p: ModelParams, t: float, s: float, rel_tol: float = 1e-4, epsrel: float = 1e-9):
    """Adaptive quadrature of g over [0, t] x [0, s] against bifbm_cov(p, t, s).

    Both the outer and inner integrals are split at the diagonal singularity.
    Returns (numeric, closed_form, relative_gap); raises QuadratureError when
    the gap exceeds ``rel_tol``.
    """
    p.require_lrd("lemma62_quadrature")
    if not (t > 0 and s > 0):
        raise ValueError("t and s must be positive")

    # scalar float arithmetic: quad calls this ~1e6 times
    H, K = p.H, p.K
    c1 = 2.0 ** (2 - K) * H * H * K * (K - 1)
    c2 = 2.0 ** (1 - K) * H * K * (2 * H * K - 1)
    e2 = 2 * H * K - 2

    def integrand(v, u):
        if u <= 0.0 or v <= 0.0:
            return 0.0
        val = c1 * (u ** (2 * H) + v ** (2 * H)) ** (K - 2) * (u * v) ** (2 * H - 1)
        if u != v:
            val += c2 * abs(u - v) ** e2
        return val

    def inner(u):
        return sum(integrate.quad(integrand, a, b, args=(u,), epsabs=0.0, epsrel=epsrel, limit=200)[0] for a, b in _segments(0.0, s, u))

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        numeric = sum(integrate.quad(inner, a, b, epsabs=0.0, epsrel=epsrel, limit=200)[0] for a, b in _segments(0.0, t, s))
    closed = float(bifbm_cov(p, t, s))
    gap = abs(numeric - closed) / abs(closed)
    if gap > rel_tol:
        raise QuadratureError(f"quadrature gap {gap:.3g} exceeds rel_tol {rel_tol:g}", achieved_gap=gap)
    return numeric, closed, gap


# ---------------------------------------------------------------------------
# Hermite orthogonality by simulation
# ---------------------------------------------------------------------------


def hermite_orthogonality_mc(r: float, m_paths: int, seed: int, k_max: int = 4):
    """Empirical E[H_k(xi) H_l(eta)] for corr(xi, eta) = r, with z-scores against delta_kl r^k k!."""
    gen = streams.substream(seed, 0, 0)
    z = gen.standard_normal((int(m_paths), 2))
    xi = z[:, 0]
    eta = r * z[:, 0] + math.sqrt(1.0 - r * r) * z[:, 1]
    out = []
    for k in range(1, k_max + 1):
        hk = hermite(k, xi)
        for l in range(1, k_max + 1):
            prod = hk * hermite(l, eta)
            est = prod.mean()
            se = prod.std(ddof=1) / math.sqrt(len(prod))
            target = hermite_cross_moment(k, l, r)
            out.append({"k": k, "l": l, "estimate": float(est), "se": float(se), "target": target, "z": float((est - target) / se)})
    return out

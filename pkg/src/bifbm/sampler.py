"""Exact Gaussian simulation on finite time grids.

Paths are drawn as ``Z @ L.T`` where ``L`` factors the Gram matrix of the
kernel on the grid.  A second, independent simulator for X^K discretizes its
Wiener-integral representation

    X_t = int_0^inf (1 - e^{-theta t}) theta^{-(1+K)/2} dW_theta

on a geometric grid in theta.
"""

from dataclasses import dataclass

import numpy as np

from . import streams
from .cov_kernels import (
    CovKernel,
    DecompositionConstants,
    ModelParams,
    bifbm_increment_cov,
    fbm_cov,
    make_kernel,
    odd_even_cov,
    xk_cov,
)
from .errors import ConfigurationError, NotPositiveSemidefinite, ParameterError
from .reports import Z_LIMIT, CovarianceRow, ExperimentReport

PSD_TOL = 1e-10
THETA_MIN = 1e-8
TAIL_REL_TOL = 1e-6


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing positive time points, optionally with t=0 prepended."""

    points: tuple
    include_origin: bool = False

    def __post_init__(self):
        pts = tuple(float(x) for x in np.atleast_1d(np.asarray(self.points, dtype=float)))
        if len(pts) < 1:
            raise ValueError("a time grid needs at least one point")
        if pts[0] <= 0:
            raise ValueError("time grid points must be positive (use include_origin for t=0)")
        if any(b <= a for a, b in zip(pts, pts[1:])):
            raise ValueError("time grid points must be strictly increasing")
        object.__setattr__(self, "points", pts)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.points)

    @property
    def times(self) -> np.ndarray:
        """Output columns: the points, with 0 first when ``include_origin``."""
        return np.concatenate([[0.0], self.array]) if self.include_origin else self.array

    def __len__(self):
        return len(self.times)

    def to_dict(self):
        return {"points": list(self.points), "include_origin": self.include_origin}


@dataclass
class PathEnsemble:
    """M sampled paths (rows) on a time grid (columns)."""

    grid: TimeGrid
    values: np.ndarray
    seed: int
    kernel_name: str
    jitter: float = 0.0

    @property
    def m_paths(self) -> int:
        return self.values.shape[0]

    @property
    def times(self) -> np.ndarray:
        return self.grid.times


@dataclass(frozen=True)
class QuadratureSpec:
    """Geometric-midpoint discretization of the theta axis on [theta_min, theta_max]."""

    theta_max: float
    nodes: int
    scheme: str = "geometric_midpoint"
    theta_min: float = THETA_MIN

    def __post_init__(self):
        if self.scheme != "geometric_midpoint":
            raise ConfigurationError(f"unknown quadrature scheme {self.scheme!r}")
        if self.nodes < 1:
            raise ConfigurationError("nodes must be positive")
        if not self.theta_max > self.theta_min > 0:
            raise ConfigurationError("need 0 < theta_min < theta_max")

    @classmethod
    def for_horizon(cls, K, horizon, nodes, tail_rel_tol=TAIL_REL_TOL):
        return cls(theta_max=required_theta_max(K, horizon, tail_rel_tol), nodes=nodes)

    def tail_variance(self, K) -> float:
        """Upper bound theta_max^{-K}/K on the variance discarded above theta_max."""
        return self.theta_max ** (-K) / K

    def nodes_and_widths(self):
        edges = np.geomspace(self.theta_min, self.theta_max, self.nodes + 1)
        return np.sqrt(edges[1:] * edges[:-1]), np.diff(edges)

    def to_dict(self):
        return {"theta_max": self.theta_max, "nodes": self.nodes, "scheme": self.scheme, "theta_min": self.theta_min}


def required_theta_max(K, horizon, tail_rel_tol=TAIL_REL_TOL):
    """Smallest theta_max with theta_max^{-K}/K <= tail_rel_tol * xk_cov(K, T, T)."""
    budget = tail_rel_tol * float(xk_cov(K, horizon, horizon))
    return (K * budget) ** (-1.0 / K)


# ---------------------------------------------------------------------------
# Gram matrices and factorization
# ---------------------------------------------------------------------------


def gram_matrix(kernel: CovKernel, grid: TimeGrid) -> np.ndarray:
    """kernel(t_i, t_j) over the positive grid points (origin excluded).

    Only the upper triangle is evaluated; the lower one is mirrored.
    """
    t = grid.array
    i, j = np.triu_indices(len(t))
    vals = np.asarray(kernel(t[i], t[j]), dtype=float)
    m = np.empty((len(t), len(t)))
    m[i, j] = vals
    m[j, i] = vals
    return m


def factor_psd(m, tol=PSD_TOL):
    """Lower-triangular L with L L^T = m + eps I, returning (L, eps).

    eps is 0 when plain Cholesky succeeds.  Otherwise the smallest eigenvalue
    sets the jitter; jitter above ``tol * trace(m) / dim`` is refused.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("factor_psd needs a square matrix")
    if not np.allclose(m, m.T, rtol=0, atol=1e-12 * max(1.0, np.abs(m).max(initial=0.0))):
        raise ValueError("factor_psd needs a symmetric matrix")
    dim = m.shape[0]
    try:
        return np.linalg.cholesky(m), 0.0
    except np.linalg.LinAlgError:
        pass
    budget = tol * max(np.trace(m), 0.0) / dim
    lam_min = float(np.linalg.eigvalsh(m)[0])
    eps = max(-lam_min, 0.0)
    # a few attempts: rounding can leave the shifted matrix marginally indefinite
    for factor in (1.0, 2.0, 4.0, 10.0):
        trial = max(eps * factor, np.finfo(float).eps * max(np.trace(m), 1.0))
        if trial > budget:
            break
        try:
            return np.linalg.cholesky(m + trial * np.eye(dim)), trial
        except np.linalg.LinAlgError:
            continue
    raise NotPositiveSemidefinite(
        f"matrix needs jitter beyond tol*trace/dim = {budget:.3g} (min eigenvalue {lam_min:.3g})",
        lam_min,
    )


# ---------------------------------------------------------------------------
# samplers
# ---------------------------------------------------------------------------


def _with_origin(grid, values):
    if grid.include_origin:
        return np.hstack([np.zeros((values.shape[0], 1)), values])
    return values


def sample_process(kernel: CovKernel, grid: TimeGrid, m_paths: int, seed: int, workers: int = 1, stream: int = 0) -> PathEnsemble:
    """Draw ``m_paths`` centered Gaussian paths with covariance ``kernel`` on ``grid``."""
    seed = streams.check_seed(seed)
    m_paths = int(m_paths)
    n = len(grid.points)
    if m_paths == 0:
        return PathEnsemble(grid, np.zeros((0, len(grid))), seed, kernel.name.value)
    L, eps = factor_psd(gram_matrix(kernel, grid))
    values = streams.generate_rows(seed, stream, m_paths, n, lambda z: z @ L.T, workers)
    return PathEnsemble(grid, _with_origin(grid, values), seed, kernel.name.value, eps)


def _check_tail(K, grid, q):
    horizon = grid.array[-1]
    need = required_theta_max(K, horizon)
    if q.tail_variance(K) > TAIL_REL_TOL * float(xk_cov(K, horizon, horizon)) * (1 + 1e-12):
        raise ConfigurationError(
            f"theta_max={q.theta_max:.6g} leaves tail variance above {TAIL_REL_TOL:g} x Var(X_T); "
            f"need theta_max >= {need:.6g}"
        )


def _xk_loadings(K, times, q):
    theta, width = q.nodes_and_widths()
    return -np.expm1(-np.outer(times, theta)) * theta ** (-(1.0 + K) / 2.0) * np.sqrt(width)


def discretized_xk_cov(K, s, t, q: QuadratureSpec):
    """sum_k (1 - e^{-theta_k t})(1 - e^{-theta_k s}) theta_k^{-(1+K)} width_k."""
    theta, width = q.nodes_and_widths()
    s, t = np.broadcast_arrays(np.asarray(s, dtype=float), np.asarray(t, dtype=float))
    ws = theta ** (-(1.0 + K)) * width
    out = np.einsum("...k,...k,k->...", -np.expm1(-t[..., None] * theta), -np.expm1(-s[..., None] * theta), ws)
    return out[()] if out.ndim == 0 else out


def sample_xk_integral(K, grid: TimeGrid, q: QuadratureSpec, m_paths, seed, workers=1, stream=0) -> PathEnsemble:
    """Paths of X^K from the discretized Wiener integral (normals shared across t)."""
    if not 0.0 < K < 1.0:
        raise ParameterError(f"X^K needs 0 < K < 1, got K={K}")
    _check_tail(K, grid, q)
    A = _xk_loadings(K, grid.times, q)
    m_paths = int(m_paths)
    if m_paths == 0:
        return PathEnsemble(grid, np.zeros((0, len(grid))), seed, "xk_integral")
    values = streams.generate_rows(seed, stream, m_paths, q.nodes, lambda z: z @ A.T, workers)
    return PathEnsemble(grid, values, streams.check_seed(seed), "xk_integral")


def quadrature_refinement(K, pairs, base_nodes=256, doublings=4, grow_theta=True):
    """Max relative error of :func:`discretized_xk_cov` over ``pairs`` per refinement level.

    Each level doubles the node count and, when ``grow_theta``, theta_max.
    """
    pairs = np.asarray(pairs, dtype=float)
    s, t = pairs[:, 0], pairs[:, 1]
    horizon = float(pairs.max())
    exact = np.asarray(xk_cov(K, s, t))
    theta0 = required_theta_max(K, horizon)
    levels = []
    for j in range(doublings + 1):
        q = QuadratureSpec(theta0 * (2.0**j if grow_theta else 1.0), base_nodes * 2**j)
        approx = discretized_xk_cov(K, s, t, q)
        levels.append({"nodes": q.nodes, "theta_max": q.theta_max, "max_rel_error": float(np.max(np.abs(approx / exact - 1.0)))})
    return levels


# ---------------------------------------------------------------------------
# estimation
# ---------------------------------------------------------------------------


def empirical_cov(values, pairs=None):
    """Zero-mean covariance estimates and standard errors.

    ``values`` is an ensemble or an (M, N) array.  With ``pairs`` (a list of
    column-index pairs) returns two 1-D arrays; otherwise two N x N matrices.
    The standard error is the sample standard deviation of the products
    divided by sqrt(M).
    """
    v = values.values if isinstance(values, PathEnsemble) else np.asarray(values, dtype=float)
    M = v.shape[0]
    if M < 2:
        raise ValueError("empirical_cov needs at least two replicates")
    if pairs is None:
        est = v.T @ v / M
        sq = (v * v).T @ (v * v)
    else:
        idx = np.asarray(pairs, dtype=int).reshape(-1, 2)
        prods = v[:, idx[:, 0]] * v[:, idx[:, 1]]
        est = prods.sum(axis=0) / M
        sq = (prods * prods).sum(axis=0)
    var = np.maximum(sq - M * est * est, 0.0) / (M - 1)
    return est, np.sqrt(var / M)


def _upper_pairs(n):
    i, j = np.triu_indices(n)
    return np.column_stack([i, j])


def covariance_table(values, times, theory_fn):
    """CovarianceRow per upper-triangular pair of columns."""
    pairs = _upper_pairs(values.shape[1])
    est, se = empirical_cov(values, pairs)
    rows = []
    for (i, j), e, s_e in zip(pairs, est, se):
        rows.append(CovarianceRow(t=float(times[i]), s=float(times[j]), empirical=float(e), theoretical=float(theory_fn(times[i], times[j])), se=float(s_e)))
    return rows


def decomposition_mc_check(p: ModelParams, grid: TimeGrid, m_paths: int, seed: int, workers: int = 1) -> ExperimentReport:
    """Empirical Gram of C1 X^{H,K} + B^{H,K} (independent) against C2^2 fBm(HK)."""
    p.require_k_below_one("decomposition_mc_check")
    c = DecompositionConstants(p.K)
    grid = TimeGrid(grid.points)  # the origin row carries no information
    x = sample_process(make_kernel("xhk", p.H, p.K), grid, m_paths, seed, workers, stream=1)
    b = sample_process(make_kernel("bifbm", p.H, p.K), grid, m_paths, seed, workers, stream=2)
    combined = c.C1 * x.values + b.values
    rows = covariance_table(combined, grid.times, lambda s, t: c.C2**2 * fbm_cov(p.HK, s, t))
    rep = ExperimentReport(
        name="decomposition",
        params=p.to_dict(),
        seed=seed,
        m_paths=m_paths,
        table=rows,
        diagnostics={"C1": c.C1, "C2": c.C2, "grid": grid.to_dict(), "jitter": {"xhk": x.jitter, "bifbm": b.jitter}},
        tolerances={"max_abs_z": Z_LIMIT},
    )
    rep.passed = rep.max_abs_z <= Z_LIMIT
    return rep


def prop51_mc_check(K: float, grid: TimeGrid, m_paths: int, seed: int, workers: int = 1) -> ExperimentReport:
    """C3^{-1/2} X^K + B^{odd} (independent) against the even-part covariance.

    The swapped pairing (X^K added to the even part, compared with the odd
    part) is scored too and stored under diagnostics; it should fail.
    """
    c3 = DecompositionConstants(K).C3
    grid = TimeGrid(grid.points)
    x = sample_process(make_kernel("xk", K=K), grid, m_paths, seed, workers, stream=1)
    odd = sample_process(make_kernel("odd_part", K=K), grid, m_paths, seed, workers, stream=2)
    even = sample_process(make_kernel("even_part", K=K), grid, m_paths, seed, workers, stream=3)
    scale = c3**-0.5
    rows = covariance_table(scale * x.values + odd.values, grid.times, lambda s, t: odd_even_cov(K, "even", s, t))
    swapped = covariance_table(scale * x.values + even.values, grid.times, lambda s, t: odd_even_cov(K, "odd", s, t))
    rep = ExperimentReport(
        name="odd_even_decomposition",
        params={"K": K},
        seed=seed,
        m_paths=m_paths,
        table=rows,
        diagnostics={"C3": c3, "swapped_pairing_max_abs_z": max(abs(r.z) for r in swapped)},
        tolerances={"max_abs_z": Z_LIMIT},
    )
    rep.passed = rep.max_abs_z <= Z_LIMIT
    return rep


def xk_integral_mc_check(K, grid: TimeGrid, q: QuadratureSpec, m_paths, seed, workers=1) -> ExperimentReport:
    """Empirical Gram of the quadrature simulator against the discretized covariance.

    The closed-form covariance and its quadrature error are reported alongside.
    """
    ens = sample_xk_integral(K, TimeGrid(grid.points), q, m_paths, seed, workers)
    rows = covariance_table(ens.values, ens.times, lambda s, t: discretized_xk_cov(K, s, t, q))
    closed = {f"{r.t:g},{r.s:g}": float(xk_cov(K, r.s, r.t)) for r in rows}
    quad_err = max(abs(r.theoretical / closed[f"{r.t:g},{r.s:g}"] - 1.0) for r in rows)
    rep = ExperimentReport(
        name="xk_integral",
        params={"K": K},
        seed=seed,
        m_paths=m_paths,
        table=rows,
        diagnostics={"quadrature": q.to_dict(), "closed_form": closed, "max_quadrature_rel_error": quad_err},
        tolerances={"max_abs_z": Z_LIMIT},
    )
    rep.passed = rep.max_abs_z <= Z_LIMIT
    return rep


# ---------------------------------------------------------------------------
# increments at a far starting point
# ---------------------------------------------------------------------------


def increment_kernel_distance(p: ModelParams, h: float, grid: TimeGrid) -> float:
    """max_{i,j} |Cov(B_{h+t_i} - B_h, B_{h+t_j} - B_h) - 2^{1-K} fbm_cov(HK, t_i, t_j)|.

    Purely deterministic.  The increment covariance comes from
    :func:`bifbm_increment_cov`, which is algebraically the four-term
    bilinear form on bifbm_cov but free of cancellation at large h.
    """
    if not h > 0:
        raise ValueError("h must be positive")
    t = grid.array
    i, j = np.triu_indices(len(t))
    inc = np.asarray(bifbm_increment_cov(p, h, t[i], t[j]))
    target = 2.0 ** (1.0 - p.K) * np.asarray(fbm_cov(p.HK, t[i], t[j]))
    return float(np.max(np.abs(inc - target)))

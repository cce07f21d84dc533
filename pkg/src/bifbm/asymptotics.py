"""Exact values versus leading-order terms for the large-h, large-a and large-n regimes.

Three regimes are covered:

* ``prop22``: variance of X^{H,K}_{h+t} - X^{H,K}_h as h -> inf,
  leading term Gamma(1-K)/K 2^K H^2 K (1-K) t^2 h^{2(HK-1)}.
* ``thm31``: f_a(n) as a -> inf for fixed n, leading term c a^{2(HK-1)}.
* ``thm41``: R(a, a+n) as n -> inf for fixed a, two-term expansion.

For ``thm31`` and ``thm41`` two leading constants are available:

``"nominal"``
    f_a(n) ~ 2 H^2 K (K-1) a^{2(HK-1)} and the second term of R(a, a+n)
    carrying HK(K-1)((a+1)^{2H} - a^{2H}).
``"taylor"``
    the constants from a second-order Taylor expansion of the mixed
    difference of F(x, y) = (x^{2H} + y^{2H})^K: 2^K H^2 K (K-1) and
    2HK(K-1)((a+1)^{2H} - a^{2H}) respectively.

The two agree only at K = 1 (thm31) and never for thm41 (factor 2), so
exact/leading ratios under "nominal" converge to 2^{K-1} and 2.
"""

import enum
from dataclasses import dataclass, field

import numpy as np

from .cov_kernels import ModelParams, f_a, gamma_fn, mixed_difference_F, noise_cov, xhk_noise_cov
from .errors import DomainError, ParameterError
from .reports import fmt17

DEFAULT_SWEEP = (1e2, 1e3, 1e4, 1e5, 1e6)
SLOPE_TOL = 0.05
RATIO_TOL = 0.05
CONSTANTS = ("nominal", "taylor")


def _check_constant(constant):
    if constant not in CONSTANTS:
        raise ValueError(f"constant must be one of {CONSTANTS}, got {constant!r}")


# ---------------------------------------------------------------------------
# large h: increments of X^{H,K}
# ---------------------------------------------------------------------------


def xhk_increment_var_exact(p: ModelParams, h, t):
    """E[(X^{H,K}_{h+t} - X^{H,K}_h)^2], exact.

    Closed form Gamma(1-K)/K [2((h+t)^{2H} + h^{2H})^K - 2^K((h+t)^{2HK} + h^{2HK})],
    evaluated as -Gamma(1-K)/K times the mixed difference of F with steps (t, t),
    which avoids the cancellation at large h.
    """
    p.require_k_below_one("xhk_increment_var_exact")
    return -gamma_fn(1.0 - p.K) / p.K * mixed_difference_F(p, h, t, h, t)


def xhk_increment_var_leading(p: ModelParams, h, t):
    """Gamma(1-K)/K 2^K H^2 K (1-K) t^2 h^{2(HK-1)}."""
    p.require_k_below_one("xhk_increment_var_leading")
    H, K = p.H, p.K
    h, t = np.asarray(h, dtype=float), np.asarray(t, dtype=float)
    if np.any(h <= 0):
        raise DomainError("leading term needs h > 0")
    r = gamma_fn(1.0 - K) / K * 2.0**K * H * H * K * (1.0 - K) * t * t * h ** (2.0 * (p.HK - 1.0))
    return r[()] if r.ndim == 0 else r


def xhk_noise_cauchy_schwarz(p: ModelParams, a, n):
    """(|R^X(a, a+n)|, sqrt(var of a-increment) * sqrt(var of (a+n)-increment))."""
    lhs = np.abs(np.asarray(xhk_noise_cov(p, a, n)))
    va = np.asarray(xhk_increment_var_exact(p, a, 1.0))
    vb = np.asarray(xhk_increment_var_exact(p, np.asarray(a, dtype=float) + n, 1.0))
    return lhs, np.sqrt(va * vb)


# ---------------------------------------------------------------------------
# large a and large n: the noise
# ---------------------------------------------------------------------------


def fa_leading(p: ModelParams, a, constant="nominal"):
    """Leading term c * a^{2(HK-1)} of f_a(n) as a -> inf (n fixed).

    c = 2 H^2 K (K-1) for ``constant="nominal"``; 2^K H^2 K (K-1) for ``"taylor"``.
    """
    _check_constant(constant)
    a = np.asarray(a, dtype=float)
    if np.any(a <= 0):
        raise DomainError("fa_leading needs a > 0")
    H, K = p.H, p.K
    pref = 2.0 if constant == "nominal" else 2.0**K
    r = pref * H * H * K * (K - 1.0) * a ** (2.0 * (p.HK - 1.0))
    return r[()] if r.ndim == 0 else r


def r_large_n_terms(p: ModelParams, a, n, constant="nominal"):
    """The two displayed terms of R(a, a+n) for large n, prefactor 2^{-K} included.

    term1 = 2^{-K} 2HK(2HK-1) n^{2HK-2}
    term2 = 2^{-K} m HK(K-1)((a+1)^{2H} - a^{2H}) n^{2HK-1-2H}, m = 1 ("nominal") or 2 ("taylor").
    """
    _check_constant(constant)
    a, n = np.asarray(a, dtype=float), np.asarray(n, dtype=float)
    if np.any(n < 1):
        raise DomainError("r_large_n_terms needs n >= 1")
    H, K, HK = p.H, p.K, p.HK
    mult = 1.0 if constant == "nominal" else 2.0
    pre = 2.0 ** (-K)
    term1 = pre * 2.0 * HK * (2.0 * HK - 1.0) * n ** (2.0 * HK - 2.0)
    term2 = pre * mult * HK * (K - 1.0) * ((a + 1.0) ** (2 * H) - a ** (2 * H)) * n ** (2.0 * HK - 1.0 - 2.0 * H)
    if term1.ndim == 0 and term2.ndim == 0:
        return float(term1), float(term2)
    return term1, term2


class DominantTerm(str, enum.Enum):
    QUADRATIC_DECAY = "quadratic_decay_2HK_minus_2"
    MIXED_DECAY = "decay_2HK_minus_1_minus_2H"
    BOUNDARY = "boundary"


def dominant_term_class(p: ModelParams) -> DominantTerm:
    """Which of n^{2HK-2} and n^{2HK-1-2H} dominates R(a, a+n) for large n."""
    if p.H > 0.5:
        return DominantTerm.QUADRATIC_DECAY
    if p.H < 0.5:
        return DominantTerm.MIXED_DECAY
    return DominantTerm.BOUNDARY


class SeriesClass(str, enum.Enum):
    DIVERGENT = "divergent"
    CONVERGENT = "convergent"


def lrd_classify(p: ModelParams) -> SeriesClass:
    """Divergence of sum_n R(a, a+n): divergent iff 2HK > 1."""
    return SeriesClass.DIVERGENT if p.lrd else SeriesClass.CONVERGENT


def noise_partial_sums(p: ModelParams, a, N_values):
    """sum_{n=0}^{N} R(a, a+n) for each N in ``N_values`` (summed in index order)."""
    N_values = np.asarray(N_values, dtype=int)
    n = np.arange(0, int(N_values.max()) + 1, dtype=float)
    csum = np.cumsum(np.asarray(noise_cov(p, a, n)))
    return csum[N_values]


# ---------------------------------------------------------------------------
# slope fitting and sweeps
# ---------------------------------------------------------------------------


def loglog_slope(xs, ys):
    """OLS of log|y| on log x; returns (slope, intercept, r_squared)."""
    xs, ys = np.asarray(xs, dtype=float), np.asarray(ys, dtype=float)
    if xs.size < 3 or xs.size != ys.size:
        raise ValueError("loglog_slope needs at least 3 matching points")
    if np.any(xs <= 0):
        raise ValueError("loglog_slope needs positive xs")
    if np.any(ys == 0) or not (np.all(ys > 0) or np.all(ys < 0)):
        raise ValueError("ys must be nonzero and of constant sign")
    lx, ly = np.log(xs), np.log(np.abs(ys))
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 if ss_tot == 0 else 1.0 - np.sum(resid**2) / ss_tot
    return float(slope), float(intercept), float(r2)


@dataclass
class RateReport:
    quantity: str
    params: dict
    parameters: list
    exact_values: list
    leading_values: list
    ratios: list
    fitted_slope: float
    target_slope: float
    r_squared: float
    slope_tol: float = SLOPE_TOL
    ratio_tol: float = RATIO_TOL
    settings: dict = field(default_factory=dict)

    @property
    def slope_ok(self) -> bool:
        return abs(self.fitted_slope - self.target_slope) <= self.slope_tol

    @property
    def ratio_ok(self) -> bool:
        return abs(self.ratios[-1] - 1.0) <= self.ratio_tol

    @property
    def passed(self) -> bool:
        return self.slope_ok and self.ratio_ok

    def to_dict(self):
        return {
            "quantity": self.quantity,
            "params": self.params,
            "settings": self.settings,
            "exact_values": [[x, y] for x, y in zip(self.parameters, self.exact_values)],
            "leading_values": [[x, y] for x, y in zip(self.parameters, self.leading_values)],
            "ratios": self.ratios,
            "fitted_slope": self.fitted_slope,
            "target_slope": self.target_slope,
            "r_squared": self.r_squared,
            "slope_tol": self.slope_tol,
            "ratio_tol": self.ratio_tol,
            "slope_ok": self.slope_ok,
            "ratio_ok": self.ratio_ok,
            "pass": self.passed,
        }

    def csv_rows(self):
        rows = [[fmt17(x), fmt17(e), fmt17(l), fmt17(r)] for x, e, l, r in zip(self.parameters, self.exact_values, self.leading_values, self.ratios)]
        return ["parameter", "exact", "leading", "ratio"], rows


TARGETS = ("prop22", "thm31", "thm41")


def rate_experiment(target, p: ModelParams, sweep=DEFAULT_SWEEP, t=1.0, n=1, a=1, constant="nominal", slope_tol=SLOPE_TOL, ratio_tol=RATIO_TOL) -> RateReport:
    """Sweep the asymptotic parameter and compare exact values with the leading term.

    ``prop22`` sweeps h (with increment length ``t``), ``thm31`` sweeps a
    (with lag ``n``), ``thm41`` sweeps n (with start ``a``).
    """
    if target not in TARGETS:
        raise ValueError(f"target must be one of {TARGETS}, got {target!r}")
    xs = np.asarray(sweep, dtype=float)
    if target == "prop22":
        if p.K >= 1:
            raise ParameterError("prop22 needs K < 1")
        exact = np.asarray(xhk_increment_var_exact(p, xs, t))
        lead = np.asarray(xhk_increment_var_leading(p, xs, t))
        target_slope = 2.0 * (p.HK - 1.0)
        settings = {"t": t}
    elif target == "thm31":
        if p.K >= 1:
            raise ParameterError("thm31 needs K < 1")
        exact = np.asarray(f_a(p, xs, n))
        lead = np.asarray(fa_leading(p, xs, constant))
        target_slope = 2.0 * (p.HK - 1.0)
        settings = {"n": n, "constant": constant}
    else:
        t1, t2 = r_large_n_terms(p, a, xs, constant)
        exact = np.asarray(noise_cov(p, a, xs)) - t1
        lead = np.asarray(t2)
        target_slope = 2.0 * p.HK - 1.0 - 2.0 * p.H
        settings = {"a": a, "constant": constant}
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(lead != 0, exact / np.where(lead != 0, lead, 1.0), np.nan)
    slope, _, r2 = loglog_slope(xs, exact)
    return RateReport(
        quantity=target,
        params=p.to_dict(),
        parameters=xs.tolist(),
        exact_values=exact.tolist(),
        leading_values=lead.tolist(),
        ratios=ratios.tolist(),
        fitted_slope=slope,
        target_slope=target_slope,
        r_squared=r2,
        slope_tol=slope_tol,
        ratio_tol=ratio_tol,
        settings=settings,
    )

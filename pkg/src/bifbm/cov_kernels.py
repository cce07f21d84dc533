"""Closed-form covariance kernels of bifractional Brownian motion and friends.

Every function here is pure and accepts scalars or numpy arrays (broadcast
elementwise).  Scalar inputs give numpy scalar outputs.

Notation
--------
bifBm      2^{-K} ((t^{2H} + s^{2H})^K - |t - s|^{2HK})
fBm        (|t|^{2h} + |s|^{2h} - |t - s|^{2h}) / 2
X^K        Gamma(1-K)/K (t^K + s^K - (t + s)^K)
X^{H,K}    X^K evaluated at times t^{2H}, s^{2H}

Many quantities below are mixed second differences of

    F(x, y) = (x^{2H} + y^{2H})^K

which cancel catastrophically when evaluated naively at large arguments.
They go through :func:`mixed_difference_F`, which uses expm1/log1p forms.
"""

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .errors import DomainError, ParameterError, SingularPointError

__all__ = [
    "ModelParams",
    "DecompositionConstants",
    "KernelName",
    "CovKernel",
    "make_kernel",
    "gamma_fn",
    "bifbm_cov",
    "bifbm_increment_cov",
    "fbm_cov",
    "xk_cov",
    "xhk_cov",
    "decomposition_residual",
    "mixed_difference_F",
    "noise_cov",
    "f_a",
    "g_noise",
    "xhk_noise_cov",
    "g_density",
    "g1_density",
    "g2_density",
    "odd_even_cov",
    "prop51_residual",
]

# Identity checks across the package use this pair.
REL_TOL = 1e-10
ABS_FLOOR = 1e-12


@dataclass(frozen=True)
class ModelParams:
    """The pair (H, K) with 0 < H < 1 and 0 < K <= 1."""

    H: float
    K: float

    def __post_init__(self):
        H, K = float(self.H), float(self.K)
        if not (math.isfinite(H) and 0.0 < H < 1.0):
            raise ParameterError(f"H must satisfy 0 < H < 1, got H={self.H!r}")
        if not (math.isfinite(K) and 0.0 < K <= 1.0):
            raise ParameterError(f"K must satisfy 0 < K <= 1, got K={self.K!r}")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "K", K)

    @property
    def HK(self) -> float:
        return self.H * self.K

    @property
    def lrd(self) -> bool:
        """True when 2HK > 1 (long-range dependent noise)."""
        return 2.0 * self.HK > 1.0

    @property
    def is_fbm(self) -> bool:
        return self.K == 1.0

    def require_k_below_one(self, what="this quantity"):
        if self.K >= 1.0:
            raise DomainError(f"{what} requires K < 1 (X^K is undefined at K=1), got K={self.K}")

    def require_lrd(self, what="this quantity"):
        if not self.lrd:
            raise ParameterError(f"{what} requires 2HK > 1, got 2HK={2 * self.HK:.6g}")

    def to_dict(self):
        return {"H": self.H, "K": self.K}


# ---------------------------------------------------------------------------
# Gamma function
# ---------------------------------------------------------------------------

_LANCZOS_G = 7
_LANCZOS_COEF = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)


def gamma_fn(x: float) -> float:
    """Gamma function for positive real x (Lanczos, g=7, 9 terms).

    Arguments below 1/2 go through the reflection formula.
    """
    x = float(x)
    if not x > 0.0 or not math.isfinite(x):
        raise DomainError(f"gamma_fn requires x > 0, got {x!r}")
    if x < 0.5:
        return math.pi / (math.sin(math.pi * x) * gamma_fn(1.0 - x))
    z = x - 1.0
    acc = _LANCZOS_COEF[0]
    for i in range(1, len(_LANCZOS_COEF)):
        acc += _LANCZOS_COEF[i] / (z + i)
    t = z + _LANCZOS_G + 0.5
    return math.sqrt(2.0 * math.pi) * t ** (z + 0.5) * math.exp(-t) * acc


@dataclass(frozen=True)
class DecompositionConstants:
    """C1, C2, C3 for a given K in (0, 1).

    C1 = (2^{-K} K / Gamma(1-K))^{1/2}, C2 = 2^{(1-K)/2}, C3 = 2 Gamma(1-K) / K.
    """

    K: float
    C1: float = field(init=False)
    C2: float = field(init=False)
    C3: float = field(init=False)

    def __post_init__(self):
        K = float(self.K)
        if not 0.0 < K < 1.0:
            raise DomainError(f"decomposition constants require 0 < K < 1, got K={self.K!r}")
        g = gamma_fn(1.0 - K)
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "C1", math.sqrt(2.0 ** (-K) * K / g))
        object.__setattr__(self, "C2", 2.0 ** ((1.0 - K) / 2.0))
        object.__setattr__(self, "C3", 2.0 * g / K)


# ---------------------------------------------------------------------------
# small numerical helpers
# ---------------------------------------------------------------------------


def _arr(x):
    return np.asarray(x, dtype=float)


def _out(r):
    r = np.asarray(r)
    return r[()] if r.ndim == 0 else r


def _require_nonneg(name, *xs):
    for x in xs:
        if np.any(x < 0):
            raise DomainError(f"{name} is defined for nonnegative arguments only")


def _abspow(x, p):
    """|x|^p as exp(p log|x|) with an explicit zero branch."""
    ax = np.abs(x)
    with np.errstate(divide="ignore"):
        r = np.exp(p * np.log(np.where(ax > 0, ax, 1.0)))
    return np.where(ax > 0, r, 0.0)


def _pow_increment(x0, dx, e):
    """(x0 + dx)^e - x0^e for x0 >= 0, dx >= 0, without cancellation."""
    pos = x0 > 0
    safe = np.where(pos, x0, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        stable = safe**e * np.expm1(e * np.log1p(dx / safe))
    return np.where(pos, stable, _abspow(dx, e))


def _sum_pow_increment(base, delta, K):
    """(base + delta)^K - base^K for base >= 0, delta >= 0."""
    pos = base > 0
    safe = np.where(pos, base, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        stable = safe**K * np.expm1(K * np.log1p(delta / safe))
    return np.where(pos, stable, _abspow(delta, K))


def mixed_difference_F(p: ModelParams, x0, dx, y0, dy):
    """F(x0+dx, y0+dy) - F(x0+dx, y0) - F(x0, y0+dy) + F(x0, y0).

    F(x, y) = (x^{2H} + y^{2H})^K.  All arguments must be nonnegative.

    Both orders of differencing are evaluated and the one with the smaller
    inner differences is kept, which bounds the rounding error of the outer
    subtraction by a few ulps of the inner differences.
    """
    H, K = p.H, p.K
    x0, dx, y0, dy = np.broadcast_arrays(_arr(x0), _arr(dx), _arr(y0), _arr(dy))
    _require_nonneg("mixed_difference_F", x0, dx, y0, dy)
    if K == 1.0:
        # F is additive in x^{2H}, y^{2H}
        return _out(np.zeros(x0.shape))
    X0, X1 = x0 ** (2 * H), (x0 + dx) ** (2 * H)
    Y0, Y1 = y0 ** (2 * H), (y0 + dy) ** (2 * H)
    dX = _pow_increment(x0, dx, 2 * H)
    dY = _pow_increment(y0, dy, 2 * H)

    # inner difference along y, outer along x
    a1 = _sum_pow_increment(X1 + Y0, dY, K)
    a0 = _sum_pow_increment(X0 + Y0, dY, K)
    # inner difference along x, outer along y
    b1 = _sum_pow_increment(Y1 + X0, dX, K)
    b0 = _sum_pow_increment(Y0 + X0, dX, K)

    use_a = np.maximum(np.abs(a1), np.abs(a0)) <= np.maximum(np.abs(b1), np.abs(b0))
    return _out(np.where(use_a, a1 - a0, b1 - b0))


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------


def bifbm_cov(p: ModelParams, s, t):
    """E[B_s B_t] = 2^{-K} ((t^{2H} + s^{2H})^K - |t - s|^{2HK})."""
    s, t = _arr(s), _arr(t)
    _require_nonneg("bifbm_cov", s, t)
    H, K = p.H, p.K
    return _out(2.0 ** (-K) * ((t ** (2 * H) + s ** (2 * H)) ** K - _abspow(t - s, 2 * H * K)))


def bifbm_increment_cov(p: ModelParams, h, s, t):
    """Cov(B_{h+s} - B_h, B_{h+t} - B_h), stable for large h.

    The h-independent |.|-terms collapse to 2^{-K}(s^{2HK} + t^{2HK} - |t-s|^{2HK})
    and the rest is a mixed difference of F.
    """
    h, s, t = _arr(h), _arr(s), _arr(t)
    _require_nonneg("bifbm_increment_cov", h, s, t)
    c = 2 * p.HK
    stationary = _abspow(s, c) + _abspow(t, c) - _abspow(t - s, c)
    return _out(2.0 ** (-p.K) * (mixed_difference_F(p, h, s, h, t) + stationary))


def fbm_cov(hurst: float, s, t, two_sided: bool = False):
    """(|t|^{2h} + |s|^{2h} - |t - s|^{2h}) / 2.

    With ``two_sided=False`` the arguments must be nonnegative.
    """
    if not 0.0 < hurst < 1.0:
        raise ParameterError(f"Hurst index must satisfy 0 < h < 1, got {hurst!r}")
    s, t = _arr(s), _arr(t)
    if not two_sided:
        _require_nonneg("one-sided fbm_cov", s, t)
    e = 2.0 * hurst
    return _out(0.5 * (_abspow(t, e) + _abspow(s, e) - _abspow(t - s, e)))


def xk_cov(K: float, s, t):
    """E[X^K_s X^K_t] = Gamma(1-K)/K (t^K + s^K - (t + s)^K), K < 1."""
    if not 0.0 < K < 1.0:
        raise DomainError(f"X^K is defined for 0 < K < 1 only, got K={K!r}")
    s, t = _arr(s), _arr(t)
    _require_nonneg("xk_cov", s, t)
    return _out(gamma_fn(1.0 - K) / K * (t**K + s**K - (t + s) ** K))


def xhk_cov(p: ModelParams, s, t):
    """E[X^{H,K}_s X^{H,K}_t] = xk_cov(K, s^{2H}, t^{2H})."""
    p.require_k_below_one("xhk_cov")
    s, t = _arr(s), _arr(t)
    _require_nonneg("xhk_cov", s, t)
    return xk_cov(p.K, s ** (2 * p.H), t ** (2 * p.H))


def decomposition_residual(p: ModelParams, s, t):
    """C1^2 xhk_cov + bifbm_cov - C2^2 fbm_cov(HK); identically zero."""
    p.require_k_below_one("decomposition_residual")
    c = DecompositionConstants(p.K)
    return _out(
        c.C1**2 * _arr(xhk_cov(p, s, t))
        + _arr(bifbm_cov(p, s, t))
        - c.C2**2 * _arr(fbm_cov(p.HK, s, t))
    )


# ---------------------------------------------------------------------------
# noise
# ---------------------------------------------------------------------------


def f_a(p: ModelParams, a, n):
    """Four-term part of the noise covariance specific to K < 1.

    f_a(n) = F(a+1, a+n+1) - F(a+1, a+n) - F(a, a+n+1) + F(a, a+n).
    """
    a, n = _arr(a), _arr(n)
    _require_nonneg("f_a", a, n)
    return mixed_difference_F(p, a, 1.0, a + n, 1.0)


def g_noise(p: ModelParams, n):
    """g(n) = (n+1)^{2HK} + (n-1)^{2HK} - 2 n^{2HK} for n >= 1."""
    n = _arr(n)
    if np.any(n < 1):
        raise DomainError("g_noise is defined for n >= 1 only")
    c = 2 * p.HK
    inv = 1.0 / n
    with np.errstate(divide="ignore"):
        bracket = np.expm1(c * np.log1p(inv)) + np.expm1(c * np.log1p(-inv))
    return _out(n**c * bracket)


def noise_cov(p: ModelParams, a, n):
    """R(a, a+n) = E[(B_{a+1} - B_a)(B_{a+n+1} - B_{a+n})].

    For n >= 1 this is 2^{-K}(f_a(n) + g(n)).  At n = 0 it is the increment
    variance, 2^{-K}(f_a(0) + 2), i.e. the bilinear form on bifbm_cov.
    """
    a, n = np.broadcast_arrays(_arr(a), _arr(n))
    _require_nonneg("noise_cov", a, n)
    fa = _arr(f_a(p, a, n))
    g = _arr(g_noise(p, np.where(n >= 1, n, 1.0)))
    g = np.where(n >= 1, g, 2.0)
    return _out(2.0 ** (-p.K) * (fa + g))


def xhk_noise_cov(p: ModelParams, a, n):
    """E[(X_{a+1} - X_a)(X_{a+n+1} - X_{a+n})] for X = X^{H,K}.

    The x^{2HK} parts telescope away, leaving -Gamma(1-K)/K * f_a(n).
    """
    p.require_k_below_one("xhk_noise_cov")
    return _out(-gamma_fn(1.0 - p.K) / p.K * _arr(f_a(p, a, n)))


# ---------------------------------------------------------------------------
# mixed second derivative of the bifBm covariance
# ---------------------------------------------------------------------------


def _check_density_args(p, x, y, allow_diagonal=False):
    p.require_lrd("g_density")
    x, y = _arr(x), _arr(y)
    if np.any(x <= 0) or np.any(y <= 0):
        raise DomainError("g_density requires x > 0 and y > 0")
    if not allow_diagonal and np.any(x == y):
        raise SingularPointError("g_density is singular on the diagonal x == y")
    return x, y


def g1_density(p: ModelParams, x, y):
    """2^{2-K} H^2 K (K-1) (x^{2H} + y^{2H})^{K-2} (xy)^{2H-1}."""
    x, y = _check_density_args(p, x, y, allow_diagonal=True)
    H, K = p.H, p.K
    return _out(
        2.0 ** (2 - K) * H * H * K * (K - 1) * (x ** (2 * H) + y ** (2 * H)) ** (K - 2) * (x * y) ** (2 * H - 1)
    )


def g2_density(p: ModelParams, x, y):
    """2^{1-K} H K (2HK - 1) |x - y|^{2HK-2}."""
    x, y = _check_density_args(p, x, y)
    H, K = p.H, p.K
    return _out(2.0 ** (1 - K) * H * K * (2 * H * K - 1) * np.abs(x - y) ** (2 * H * K - 2))


def g_density(p: ModelParams, x, y):
    """d^2/dxdy of bifbm_cov off the diagonal; requires 2HK > 1."""
    return _out(_arr(g1_density(p, x, y)) + _arr(g2_density(p, x, y)))


# ---------------------------------------------------------------------------
# odd and even parts of a two-sided fBm with Hurst index K/2
# ---------------------------------------------------------------------------


def odd_even_cov(K: float, part: str, s, t):
    """Covariance of (B_t -/+ B_{-t})/2 for a two-sided fBm of index K/2.

    ``part`` is ``"odd"`` or ``"even"``.
    """
    if not 0.0 < K <= 1.0:
        raise ParameterError(f"K must satisfy 0 < K <= 1, got {K!r}")
    s, t = _arr(s), _arr(t)
    _require_nonneg("odd_even_cov", s, t)
    same = _arr(fbm_cov(K / 2, t, s, two_sided=True))
    mirrored = _arr(fbm_cov(K / 2, t, -s, two_sided=True))
    if part == "odd":
        return _out(0.5 * (same - mirrored))
    if part == "even":
        return _out(0.5 * (same + mirrored))
    raise ValueError(f"part must be 'odd' or 'even', got {part!r}")


def prop51_residual(K: float, s, t):
    """even_cov - odd_cov - xk_cov / C3, which vanishes identically.

    Equivalently, with X^K independent of the odd part,
    C3^{-1/2} X^K + B^{odd} has the law of B^{even}.
    """
    c3 = DecompositionConstants(K).C3
    return _out(
        _arr(odd_even_cov(K, "even", s, t)) - _arr(odd_even_cov(K, "odd", s, t)) - _arr(xk_cov(K, s, t)) / c3
    )


# ---------------------------------------------------------------------------
# uniform kernel handle
# ---------------------------------------------------------------------------


class KernelName(str, enum.Enum):
    BIFBM = "bifbm"
    FBM_ONE_SIDED = "fbm_one_sided"
    FBM_TWO_SIDED = "fbm_two_sided"
    XK = "xk"
    XHK = "xhk"
    ODD_PART = "odd_part"
    EVEN_PART = "even_part"

    @property
    def code(self) -> int:
        return list(KernelName).index(self)


Params = Union[ModelParams, float]


@dataclass(frozen=True)
class CovKernel:
    """A named covariance function with its parameters bound."""

    name: KernelName
    params: Params
    domain: str
    fn: Callable = field(repr=False, compare=False)

    def __call__(self, s, t):
        return self.fn(s, t)

    def describe(self):
        params = self.params.to_dict() if isinstance(self.params, ModelParams) else {"value": self.params}
        return {"name": self.name.value, "params": params, "domain": self.domain}


def make_kernel(name, H=None, K=None, hurst=None) -> CovKernel:
    """Build a :class:`CovKernel` by name.

    bifbm and xhk take (H, K); xk, odd_part, even_part take K; the fbm kernels
    take ``hurst``.
    """
    name = KernelName(name)
    if name in (KernelName.BIFBM, KernelName.XHK):
        p = ModelParams(H, K)
        if name is KernelName.BIFBM:
            return CovKernel(name, p, "nonneg", lambda s, t: bifbm_cov(p, s, t))
        p.require_k_below_one("the xhk kernel")
        return CovKernel(name, p, "nonneg", lambda s, t: xhk_cov(p, s, t))
    if name is KernelName.XK:
        k = float(K)
        if not 0.0 < k < 1.0:
            raise DomainError(f"X^K is defined for 0 < K < 1 only, got K={K!r}")
        return CovKernel(name, k, "nonneg", lambda s, t: xk_cov(k, s, t))
    if name in (KernelName.ODD_PART, KernelName.EVEN_PART):
        k = float(K)
        part = "odd" if name is KernelName.ODD_PART else "even"
        odd_even_cov(k, part, 1.0, 1.0)  # validates K
        return CovKernel(name, k, "nonneg", lambda s, t: odd_even_cov(k, part, s, t))
    h = float(hurst)
    if not 0.0 < h < 1.0:
        raise ParameterError(f"Hurst index must satisfy 0 < h < 1, got {hurst!r}")
    two = name is KernelName.FBM_TWO_SIDED
    return CovKernel(name, h, "real" if two else "nonneg", lambda s, t: fbm_cov(h, s, t, two_sided=two))

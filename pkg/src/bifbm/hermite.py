"""Monic (probabilists') Hermite polynomials and expansions of polynomial functionals."""

import math
from dataclasses import dataclass, field

import numpy as np

MAX_DEGREE = 8
GH_NODES = 60
MEAN_TOL = 1e-10
COEFF_CONVENTION = "c_k = E[f(xi) H_k(xi)] / k!, xi ~ N(0, 1)"


def hermite(k: int, x):
    """H_k(x) via H_{k+1} = x H_k - k H_{k-1}, H_0 = 1, H_1 = x."""
    if k < 0:
        raise ValueError("Hermite degree must be nonnegative")
    x = np.asarray(x, dtype=float)
    h_prev, h = np.ones_like(x), x
    if k == 0:
        return h_prev[()] if x.ndim == 0 else h_prev
    for j in range(1, k):
        h_prev, h = h, x * h - j * h_prev
    return h[()] if x.ndim == 0 else h


def hermite_cross_moment(k: int, l: int, r: float) -> float:
    """E[H_k(xi) H_l(eta)] = delta_{kl} r^k k! for unit-variance jointly Gaussian (xi, eta)."""
    if abs(r) > 1:
        raise ValueError("correlation must lie in [-1, 1]")
    return float(r**k * math.factorial(k)) if k == l else 0.0


def gauss_hermite(n: int = GH_NODES):
    """Nodes and weights for integrals against the standard normal density."""
    x, w = np.polynomial.hermite_e.hermegauss(n)
    return x, w / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class PolyFunction:
    """A polynomial f given by monomial (``kind="poly"``) or Hermite (``kind="hermite"``) coefficients.

    ``coeffs[k]`` multiplies x^k or H_k(x).  Text form: ``"poly:0,1,0,1"`` is x + x^3,
    ``"hermite:0,1,0.5"`` is H_1 + 0.5 H_2.
    """

    kind: str
    coeffs: tuple

    def __post_init__(self):
        if self.kind not in ("poly", "hermite"):
            raise ValueError(f"kind must be 'poly' or 'hermite', got {self.kind!r}")
        c = tuple(float(v) for v in self.coeffs)
        if not c:
            raise ValueError("need at least one coefficient")
        if len(c) - 1 > MAX_DEGREE:
            raise ValueError(f"degree above {MAX_DEGREE} is not supported")
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def parse(cls, text: str) -> "PolyFunction":
        kind, _, rest = text.partition(":")
        if not rest:
            raise ValueError(f"expected 'poly:c0,c1,...' or 'hermite:c0,c1,...', got {text!r}")
        return cls(kind.strip(), tuple(float(v) for v in rest.split(",")))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "poly":
            return np.polynomial.polynomial.polyval(x, self.coeffs)
        return np.polynomial.hermite_e.hermeval(x, self.coeffs)

    def __str__(self):
        return f"{self.kind}:" + ",".join(repr(c) for c in self.coeffs)


@dataclass
class HermiteExpansion:
    function: PolyFunction
    coefficients: np.ndarray  # index k = 0..k_max
    mean: float
    second_moment: float
    convention: str = COEFF_CONVENTION
    notes: list = field(default_factory=list)

    @property
    def k_max(self) -> int:
        return len(self.coefficients) - 1

    @property
    def c1(self) -> float:
        return float(self.coefficients[1]) if self.k_max >= 1 else 0.0

    @property
    def rank_one(self) -> bool:
        return self.c1 != 0.0

    def weights(self) -> np.ndarray:
        """c_k^2 k! for k = 0..k_max."""
        k = np.arange(self.k_max + 1)
        return self.coefficients**2 * np.array([math.factorial(int(j)) for j in k], dtype=float)

    @property
    def tail_mass(self) -> float:
        """E[f^2] - sum_k c_k^2 k!  (zero up to rounding for polynomials of degree <= k_max)."""
        return self.second_moment - float(self.weights().sum())

    @property
    def higher_order_mass(self) -> float:
        """sum_{k>=2} c_k^2 k!."""
        return float(self.weights()[2:].sum())

    def reconstruct(self, x):
        return np.polynomial.hermite_e.hermeval(np.asarray(x, dtype=float), self.coefficients)

    def to_dict(self):
        return {
            "function": str(self.function),
            "coefficients": self.coefficients.tolist(),
            "c1": self.c1,
            "mean": self.mean,
            "second_moment": self.second_moment,
            "tail_mass": self.tail_mass,
            "convention": self.convention,
            "notes": self.notes,
        }


def hermite_coeffs(f: PolyFunction, k_max: int = MAX_DEGREE, quad_nodes: int = GH_NODES) -> HermiteExpansion:
    """Hermite coefficients of a centered polynomial functional by Gauss-Hermite quadrature."""
    x, w = gauss_hermite(quad_nodes)
    fx = f(x)
    mean = float(w @ fx)
    if abs(mean) > MEAN_TOL:
        raise ValueError(f"f must be centered under N(0,1); E[f] = {mean:.3g}")
    coeffs = np.array([w @ (fx * hermite(k, x)) / math.factorial(k) for k in range(k_max + 1)])
    # round-off level coefficients are exactly zero for polynomial input
    coeffs[np.abs(coeffs) < 1e-13 * max(1.0, np.abs(coeffs).max())] = 0.0
    exp = HermiteExpansion(f, coeffs, mean, float(w @ (fx * fx)))
    if not exp.rank_one:
        exp.notes.append("c1 == 0: Hermite rank above one, rank-one limit does not apply")
    return exp

"""Covariance algebra, exact simulation and limit-theorem checks for bifractional Brownian motion."""

__version__ = "0.1.0"

from .cov_kernels import (  # noqa: E402
    CovKernel,
    DecompositionConstants,
    ModelParams,
    bifbm_cov,
    fbm_cov,
    make_kernel,
    noise_cov,
    xhk_cov,
    xk_cov,
)
from .sampler import PathEnsemble, QuadratureSpec, TimeGrid, sample_process  # noqa: E402

__all__ = [
    "CovKernel",
    "DecompositionConstants",
    "ModelParams",
    "PathEnsemble",
    "QuadratureSpec",
    "TimeGrid",
    "bifbm_cov",
    "fbm_cov",
    "make_kernel",
    "noise_cov",
    "sample_process",
    "xhk_cov",
    "xk_cov",
]

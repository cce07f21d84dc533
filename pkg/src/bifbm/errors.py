"""Exception types shared across the package."""

import numpy as np


class ParameterError(ValueError):
    """A model parameter lies outside its admissible range."""


class DomainError(ValueError):
    """A function was evaluated outside its domain."""


class SingularPointError(DomainError):
    """Evaluation at a point where the formula is singular (e.g. x == y)."""


class ConfigurationError(ValueError):
    """An experiment or quadrature configuration cannot satisfy its contract."""


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance."""

    def __init__(self, message, achieved_gap=None):
        super().__init__(message)
        self.achieved_gap = achieved_gap


class NotPositiveSemidefinite(np.linalg.LinAlgError):
    """Jitter needed to factor a matrix exceeds the allowed budget."""

    def __init__(self, message, min_eigenvalue):
        super().__init__(message)
        self.min_eigenvalue = float(min_eigenvalue)

"""Worst-case probability measures and model-risk metrics.

Computes worst-case distributions under a transport-cost budget with an
entropy constraint, side by side with the classical relative-entropy
(exponential-tilting) baseline.  Covers finite-state transport arithmetic,
grid densities, Gaussian closed forms, robust mean-variance portfolios and
delta-hedging Monte Carlo.
"""

__version__ = "0.1.0"

from wrisk.errors import InfeasibilityError, IntegrabilityError, ValidationError
from wrisk.params import RobustnessParams

__all__ = [
    "__version__",
    "InfeasibilityError",
    "IntegrabilityError",
    "ValidationError",
    "RobustnessParams",
]

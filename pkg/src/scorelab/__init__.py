"""Proper scoring rules corrected for observation error.

Base scores (logarithmic, CRPS), their corrections under additive Gaussian,
multiplicative gamma and error-in-variables noise models, the exact laws of
the Gaussian log scores, and a seeded Monte Carlo experiment engine.
"""

__version__ = "0.1.0"

from .errors import ConfigError, ConvergenceError, DomainError

__all__ = ["ConfigError", "ConvergenceError", "DomainError", "__version__"]

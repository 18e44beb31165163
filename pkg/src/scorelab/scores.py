"""Base and observation-error-corrected scoring rules.

All scores are negatively oriented. Two corrections are provided:

* *wedge*: a score of ``y`` whose conditional mean given ``X = x`` is the base
  score at ``x`` (only for the Gaussian log score under Model A);
* *vee*: the conditional mean of the base score at the hidden truth given the
  observations, ``E[s0(f, X) | Y = y]`` (and ``| Y = y, Z = z`` for EIV).

Score functions accept a scalar or an array argument; ``ScoreValue.value``
mirrors that.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
from scipy import special

from .distributions import GammaParams, GaussianParams, MvGaussianParams, spd_inverse
from .errors import DomainError
from .models import (
    EivModel,
    ModelA,
    ModelB,
    eiv_posterior_covariance,
    eiv_posterior_mean,
)
from .numerics import (
    QuadratureSpec,
    digamma,
    gamma_expectation_fixed,
    integrate_semi_infinite,
    log_beta_fn,
    log_gamma,
    normal_pdf,
    normal_sf,
)

Forecast = Union[GaussianParams, GammaParams, MvGaussianParams]

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
_INV_SQRT_PI = 1.0 / math.sqrt(math.pi)


class ScoreKind(str, enum.Enum):
    LOG = "log"
    CRPS = "crps"


class Correction(str, enum.Enum):
    NONE = "none"
    WEDGE = "wedge"
    VEE = "vee"


@dataclass(frozen=True)
class ScoreValue:
    value: float | np.ndarray
    score_kind: ScoreKind
    correction: Correction
    numeric_error: float = 0.0

    def __post_init__(self):
        if not self.numeric_error >= 0:
            raise DomainError("numeric_error must be nonnegative")

    def __float__(self):
        return float(self.value)


def _out(arr):
    return float(arr) if np.ndim(arr) == 0 else arr


def _finite(x, name="x"):
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DomainError(f"{name} must be finite")
    return x


def _positive(x, name="x"):
    x = _finite(x, name)
    if np.any(x <= 0):
        raise DomainError(f"{name} must be positive")
    return x


def _gaussian_forecast(f):
    if not isinstance(f, GaussianParams):
        raise DomainError("a Gaussian forecast is required")
    if f.variance <= 0:
        raise DomainError("forecast variance must be positive")
    return f.mean, f.variance


def _gamma_forecast(f):
    if not isinstance(f, GammaParams):
        raise DomainError("a gamma forecast is required")
    return f.shape, f.rate


# --- Gaussian log score -----------------------------------------------------


def log_score_gaussian(f: GaussianParams, x) -> ScoreValue:
    """log sigma + (x - mu)^2 / (2 sigma^2) + log(2 pi) / 2."""
    mu, var = _gaussian_forecast(f)
    x = _finite(x)
    value = 0.5 * math.log(var) + (x - mu) ** 2 / (2.0 * var) + _HALF_LOG_2PI
    return ScoreValue(_out(value), ScoreKind.LOG, Correction.NONE)


def wedge_log_score_gaussian(f: GaussianParams, y, omega2: float) -> ScoreValue:
    """Additive-noise log score with the noise variance subtracted.

    Its mean over ``Y | X = x`` is the base score at ``x``. It is not bounded
    below and is returned unclamped.
    """
    mu, var = _gaussian_forecast(f)
    if not (omega2 >= 0 and math.isfinite(omega2)):
        raise DomainError("omega2 must be finite and nonnegative")
    y = _finite(y, "y")
    value = 0.5 * math.log(var) + ((y - mu) ** 2 - omega2) / (2.0 * var) + _HALF_LOG_2PI
    return ScoreValue(_out(value), ScoreKind.LOG, Correction.WEDGE)


def vee_log_score_gaussian(f: GaussianParams, y, model: ModelA) -> ScoreValue:
    """E[s0(f, X) | Y = y] under Model A."""
    mu, var = _gaussian_forecast(f)
    ybar = model.posterior_mean(_finite(y, "y"))
    value = 0.5 * math.log(var) + (model.posterior_variance + (ybar - mu) ** 2) / (2.0 * var) + _HALF_LOG_2PI
    return ScoreValue(_out(value), ScoreKind.LOG, Correction.VEE)


# --- Gaussian CRPS ----------------------------------------------------------


def _crps_gaussian_core(mu, sigma, x):
    v = (x - mu) / sigma
    return x + 2.0 * sigma * (normal_pdf(v) - v * normal_sf(v)) - (mu + sigma * _INV_SQRT_PI)


def crps_gaussian(f: GaussianParams, x) -> ScoreValue:
    mu, _ = _gaussian_forecast(f)
    value = _crps_gaussian_core(mu, f.sd, _finite(x))
    return ScoreValue(_out(value), ScoreKind.CRPS, Correction.NONE)


def _crps_gaussian_expectation_core(mu, sigma, a, b2):
    s = math.sqrt(sigma * sigma + b2)
    u = (a - mu) / s
    return a + 2.0 * (s * normal_pdf(u) - (a - mu) * normal_sf(u)) - (mu + sigma * _INV_SQRT_PI)


def crps_expectation_gaussian(f: GaussianParams, law: GaussianParams) -> float:
    """E[crps_gaussian(f, X)] for X ~ ``law`` (a point mass is allowed)."""
    mu, _ = _gaussian_forecast(f)
    return float(_crps_gaussian_expectation_core(mu, f.sd, law.mean, law.variance))


def vee_crps_gaussian(f: GaussianParams, y, model: ModelA) -> ScoreValue:
    """E[crps_gaussian(f, X) | Y = y] under Model A.

    The posterior is N(ybar, v), so this is the Gaussian CRPS at ``ybar`` with
    the forecast spread inflated to sqrt(sigma^2 + v), except for the
    constant term which keeps the original sigma.
    """
    mu, var = _gaussian_forecast(f)
    ybar = model.posterior_mean(_finite(y, "y"))
    s = math.sqrt(var + model.posterior_variance)
    u = (ybar - mu) / s
    value = ybar + 2.0 * s * (normal_pdf(u) - u * normal_sf(u)) - (mu + f.sd * _INV_SQRT_PI)
    return ScoreValue(_out(value), ScoreKind.CRPS, Correction.VEE)


# --- Gamma log score --------------------------------------------------------


def log_score_gamma(f: GammaParams, x) -> ScoreValue:
    """(1 - alpha) log x + beta x - alpha log beta + log Gamma(alpha)."""
    alpha, beta = _gamma_forecast(f)
    x = _positive(x)
    value = (1.0 - alpha) * np.log(x) + beta * x - alpha * math.log(beta) + log_gamma(alpha)
    return ScoreValue(_out(value), ScoreKind.LOG, Correction.NONE)


def vee_log_score_gamma(f: GammaParams, y, model: ModelB) -> ScoreValue:
    """E[log_score_gamma(f, X) | Y = y] under Model B.

    Uses E[X] = A / R and E[log X] = psi(A) - log R for the posterior
    Gamma(A, R), A = alpha0 + a, R = beta0 + b / y.
    """
    alpha, beta = _gamma_forecast(f)
    shape = model.posterior_shape
    rate = model.posterior_rate(_positive(y, "y"))
    value = (
        (1.0 - alpha) * (digamma(shape) - np.log(rate))
        + beta * shape / rate
        - alpha * math.log(beta)
        + log_gamma(alpha)
    )
    return ScoreValue(_out(value), ScoreKind.LOG, Correction.VEE)


# --- Gamma CRPS -------------------------------------------------------------


def _half_mean_abs_diff_gamma(alpha, beta):
    """E|Z - Z'| / 2 for Z, Z' iid Gamma(alpha, beta): 1 / (beta B(1/2, alpha))."""
    return math.exp(-log_beta_fn(0.5, alpha)) / beta


def crps_gamma(f: GammaParams, x) -> ScoreValue:
    """Closed-form CRPS of a gamma forecast.

    Built from E|Z - x| = 2 E(Z - x)_+ - (alpha / beta - x) with
    E(Z - x)_+ = (x / beta) f(x) + (alpha / beta - x) S(x), where f and S are
    the forecast density and survival function.
    """
    alpha, beta = _gamma_forecast(f)
    x = _positive(x)
    mean = alpha / beta
    positive_part = (x / beta) * f.pdf(x) + (mean - x) * f.sf(x)
    value = x - mean - _half_mean_abs_diff_gamma(alpha, beta) + 2.0 * positive_part
    return ScoreValue(_out(value), ScoreKind.CRPS, Correction.NONE)


def _crps_gamma_expectation(alpha, beta, shape, rate, tail_term):
    """E[crps_gamma(f, X)], X ~ Gamma(shape, rate), given E[(alpha/beta - X) S(X)]."""
    rate = np.asarray(rate, dtype=float)
    # E[X f(X)] / beta, in log space.
    log_density_term = (
        (alpha - 1.0) * math.log(beta)
        + shape * np.log(rate)
        - log_beta_fn(alpha, shape)
        - (alpha + shape) * np.log(beta + rate)
    )
    return (
        shape / rate
        - alpha / beta
        - _half_mean_abs_diff_gamma(alpha, beta)
        + 2.0 * np.exp(log_density_term)
        + 2.0 * tail_term
    )


def _tail_integrand(alpha, beta, shape, rate):
    log_norm = shape * math.log(rate) - log_gamma(shape)
    mean = alpha / beta

    def integrand(x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", under="ignore"):
            logpdf = log_norm + (shape - 1.0) * np.log(x) - rate * x
            return (mean - x) * special.gammaincc(alpha, beta * x) * np.exp(logpdf)

    return integrand


def vee_crps_gamma(
    f: GammaParams,
    y,
    model: ModelB,
    spec: QuadratureSpec | None = None,
    method: str = "adaptive",
) -> ScoreValue:
    """E[crps_gamma(f, X) | Y = y] under Model B.

    Three terms are closed-form; the remaining E[(alpha/beta - X) S(X)] over the
    posterior is integrated numerically. ``method="adaptive"`` integrates each
    ``y`` with :func:`integrate_semi_infinite`; ``method="fixed"`` uses a
    vectorised Gauss-Laguerre rule of ``spec.node_count`` nodes, suited to
    large batches. ``numeric_error`` is the (largest) quadrature error
    estimate.
    """
    spec = spec or QuadratureSpec()
    alpha, beta = _gamma_forecast(f)
    shape = model.posterior_shape
    rate = np.asarray(model.posterior_rate(_positive(y, "y")), dtype=float)
    mean = alpha / beta

    if method == "adaptive":
        flat = rate.ravel()
        tails = np.empty_like(flat)
        errs = np.empty_like(flat)
        for i, r in enumerate(flat):
            tails[i], errs[i] = integrate_semi_infinite(
                _tail_integrand(alpha, beta, shape, float(r)), spec, scale=shape / r
            )
        tail = tails.reshape(rate.shape)
        err = float(np.max(errs))
    elif method == "fixed":
        tail, err = gamma_expectation_fixed(
            lambda x: (mean - x) * special.gammaincc(alpha, beta * x), shape, rate, spec.node_count
        )
        err = float(np.max(err))
    else:
        raise DomainError(f"unknown quadrature method {method!r}")

    value = _crps_gamma_expectation(alpha, beta, shape, rate, tail)
    return ScoreValue(_out(value), ScoreKind.CRPS, Correction.VEE, 2.0 * err)


def crps_expectation_gamma(f: GammaParams, law: GammaParams, spec: QuadratureSpec | None = None) -> tuple[float, float]:
    """E[crps_gamma(f, X)] for X ~ ``law``; returns (value, quadrature error)."""
    alpha, beta = _gamma_forecast(f)
    tail, err = integrate_semi_infinite(
        _tail_integrand(alpha, beta, law.shape, law.rate), spec, scale=law.mean
    )
    return float(_crps_gamma_expectation(alpha, beta, law.shape, law.rate, tail)), 2.0 * err


# --- Multivariate Gaussian log score ----------------------------------------


def _mv_forecast(f):
    if not isinstance(f, MvGaussianParams):
        raise DomainError("a multivariate Gaussian forecast is required")
    return f


def log_score_mv_gaussian(f: MvGaussianParams, x) -> ScoreValue:
    """1/2 log det Sigma + d/2 log 2 pi + 1/2 (x - mu)' Sigma^-1 (x - mu).

    ``x`` is a ``(d,)`` vector or an ``(n, d)`` batch.
    """
    f = _mv_forecast(f)
    x = _finite(x)
    if x.shape[-1] != f.dim or x.ndim > 2:
        raise DomainError("argument dimension does not match the forecast")
    resid = np.atleast_2d(x - f.mean)
    sol = np.linalg.solve(f.cholesky, resid.T)
    value = 0.5 * f.logdet + f.dim * _HALF_LOG_2PI + 0.5 * np.sum(sol * sol, axis=0)
    return ScoreValue(float(value[0]) if x.ndim == 1 else value, ScoreKind.LOG, Correction.NONE)


def eiv_vee_log_score(f: MvGaussianParams, y, z, model: EivModel) -> ScoreValue:
    """E[log_score_mv_gaussian(f, X) | Y = y, Z = z] under the EIV model.

    Equals 1/2 tr(Sigma^-1 (C + (m - mu)(m - mu)')) + d/2 log 2 pi
    + 1/2 log det Sigma with (m, C) the posterior moments. Passing ``z=None``
    conditions on ``y`` alone.
    """
    f = _mv_forecast(f)
    if f.dim != model.dim:
        raise DomainError("forecast dimension does not match the model")
    y = _finite(y, "y")
    if z is not None:
        z = _finite(z, "z")
    post_mean = eiv_posterior_mean(model, y, z)
    post_cov = eiv_posterior_covariance(model, use_forecast=z is not None)
    prec = spd_inverse(f.covariance)
    resid = np.atleast_2d(post_mean - f.mean)
    quad = np.einsum("ni,ij,nj->n", resid, prec, resid)
    value = 0.5 * (np.trace(prec @ post_cov) + quad) + f.dim * _HALF_LOG_2PI + 0.5 * f.logdet
    return ScoreValue(float(value[0]) if y.ndim == 1 else value, ScoreKind.LOG, Correction.VEE)


# --- Generic Monte Carlo corrector ------------------------------------------


def base_score(kind: ScoreKind | str, f: Forecast, x) -> ScoreValue:
    """Dispatch the uncorrected score on the forecast family."""
    kind = ScoreKind(kind)
    if isinstance(f, GaussianParams):
        return log_score_gaussian(f, x) if kind is ScoreKind.LOG else crps_gaussian(f, x)
    if isinstance(f, GammaParams):
        return log_score_gamma(f, x) if kind is ScoreKind.LOG else crps_gamma(f, x)
    if isinstance(f, MvGaussianParams):
        if kind is not ScoreKind.LOG:
            raise DomainError("only the log score is available for multivariate forecasts")
        return log_score_mv_gaussian(f, x)
    raise DomainError(f"unsupported forecast type {type(f).__name__}")


def mc_vee_score(
    base: Callable,
    f: Forecast,
    posterior,
    n: int,
    seed,
    *,
    threads: int = 1,
) -> tuple[float, float]:
    """Monte Carlo estimate of E[base(f, X)] for X drawn from ``posterior``.

    ``posterior`` is any record with a ``sample(n, seed)`` method (all
    parameter records qualify). Returns ``(estimate, standard_error)``.
    """
    if int(n) != n or n < 2:
        raise DomainError("mc_vee_score needs n >= 2")
    draws = posterior.sample(int(n), seed, threads=threads)
    values = base(f, draws)
    values = np.asarray(values.value if isinstance(values, ScoreValue) else values, dtype=float)
    if np.ptp(values) == 0:
        return float(values[0]), 0.0
    estimate = float(np.mean(values))
    std_error = float(np.std(values, ddof=1) / math.sqrt(values.shape[0]))
    return estimate, std_error


# --- Expectations under a known truth law ------------------------------------


def expected_log_score_gamma(f: GammaParams, law: GammaParams) -> float:
    """E[log_score_gamma(f, X)] for X ~ ``law``."""
    alpha, beta = _gamma_forecast(f)
    return float(
        (1.0 - alpha) * (digamma(law.shape) - math.log(law.rate))
        + beta * law.mean
        - alpha * math.log(beta)
        + log_gamma(alpha)
    )


def expected_log_score_mv_gaussian(f: MvGaussianParams, law: MvGaussianParams) -> float:
    """E[log_score_mv_gaussian(f, X)] for X ~ ``law``."""
    f = _mv_forecast(f)
    prec = spd_inverse(f.covariance)
    resid = law.mean - f.mean
    return float(
        0.5 * (np.trace(prec @ law.covariance) + resid @ prec @ resid) + f.dim * _HALF_LOG_2PI + 0.5 * f.logdet
    )

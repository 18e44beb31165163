"""Observation-error models and their exact conditional laws.

``ModelA``  X ~ N(mu0, s0^2),        Y = X + N(0, omega^2)
``ModelB``  X ~ Gamma(alpha0, beta0), Y = X * eps,  eps ~ InvGamma(a, b)
``EivModel`` X ~ N(mu_X, Sigma_X),    Y = X + N(alpha, Delta),  Z = X + N(beta, Omega)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .distributions import (
    GammaParams,
    GaussianParams,
    InvGammaParams,
    MvGaussianParams,
    chunked_draw,
    spd_inverse,
)
from .errors import DomainError


@dataclass(frozen=True)
class ModelA:
    truth: GaussianParams
    noise_variance: float

    def __post_init__(self):
        if self.truth.variance <= 0:
            raise DomainError("truth variance must be positive")
        if not (self.noise_variance >= 0 and math.isfinite(self.noise_variance)):
            raise DomainError("noise variance must be finite and nonnegative")

    @property
    def shrinkage(self) -> float:
        """Weight omega^2 / (s0^2 + omega^2) put on the prior mean."""
        return self.noise_variance / (self.truth.variance + self.noise_variance)

    @property
    def posterior_variance(self) -> float:
        s0, w2 = self.truth.variance, self.noise_variance
        return w2 * s0 / (s0 + w2)

    def posterior_mean(self, y):
        """Vectorised E[X | Y = y]."""
        y = np.asarray(y, dtype=float)
        out = y + self.shrinkage * (self.truth.mean - y)
        return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ModelB:
    truth: GammaParams
    error: InvGammaParams

    @property
    def posterior_shape(self) -> float:
        return self.truth.shape + self.error.shape

    def posterior_rate(self, y):
        """Vectorised rate of [X | Y = y]."""
        y = np.asarray(y, dtype=float)
        if np.any(y <= 0) or not np.all(np.isfinite(y)):
            raise DomainError("Model B observations must be positive and finite")
        out = self.truth.rate + self.error.scale / y
        return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class EivModel:
    truth: MvGaussianParams
    obs_bias: np.ndarray
    obs_cov: np.ndarray
    fc_bias: np.ndarray
    fc_cov: np.ndarray
    _obs_law: MvGaussianParams = field(init=False, repr=False)
    _fc_law: MvGaussianParams = field(init=False, repr=False)

    def __post_init__(self):
        d = self.truth.dim
        # Reuse the multivariate record for shape, symmetry and SPD checks.
        obs = MvGaussianParams(self.obs_bias, self.obs_cov)
        fc = MvGaussianParams(self.fc_bias, self.fc_cov)
        if obs.dim != d or fc.dim != d:
            raise DomainError("all EIV components must share the truth dimension")
        object.__setattr__(self, "obs_bias", obs.mean)
        object.__setattr__(self, "obs_cov", obs.covariance)
        object.__setattr__(self, "fc_bias", fc.mean)
        object.__setattr__(self, "fc_cov", fc.covariance)
        object.__setattr__(self, "_obs_law", obs)
        object.__setattr__(self, "_fc_law", fc)

    @property
    def dim(self) -> int:
        return self.truth.dim


def model_a_posterior(model: ModelA, y: float) -> GaussianParams:
    """[X | Y = y] under Model A; a point mass at y when omega^2 = 0."""
    return GaussianParams(model.posterior_mean(float(y)), model.posterior_variance)


def model_a_marginal_y(model: ModelA) -> GaussianParams:
    return GaussianParams(model.truth.mean, model.truth.variance + model.noise_variance)


def model_b_posterior(model: ModelB, y: float) -> GammaParams:
    """[X | Y = y] = Gamma(alpha0 + a, beta0 + b / y) by conjugacy."""
    return GammaParams(model.posterior_shape, model.posterior_rate(float(y)))


def model_b_conditional_y(model: ModelB, x: float) -> InvGammaParams:
    """[Y | X = x] = InvGamma(a, b x), since Y = x * eps."""
    if not x > 0:
        raise DomainError("x must be positive")
    return InvGammaParams(model.error.shape, model.error.scale * x)


def eiv_posterior_covariance(model: EivModel, use_forecast: bool = True) -> np.ndarray:
    """(Delta^-1 + Omega^-1 + Sigma_X^-1)^-1, dropping Omega when ``use_forecast`` is false."""
    precision = spd_inverse(model.obs_cov) + spd_inverse(model.truth.covariance)
    if use_forecast:
        precision = precision + spd_inverse(model.fc_cov)
    return spd_inverse(precision)


def eiv_posterior_mean(model: EivModel, y, z=None) -> np.ndarray:
    """Precision-weighted posterior mean; rows of ``y``/``z`` are observations.

    With ``z=None`` the forecast channel is ignored and the result is
    E[X | Y = y].
    """
    y = np.asarray(y, dtype=float)
    if y.shape[-1] != model.dim:
        raise DomainError("observation dimension does not match the model")
    cov = eiv_posterior_covariance(model, use_forecast=z is not None)
    info = (y - model.obs_bias) @ spd_inverse(model.obs_cov) + model.truth.mean @ spd_inverse(model.truth.covariance)
    if z is not None:
        z = np.asarray(z, dtype=float)
        if z.shape != y.shape:
            raise DomainError("y and z must have the same shape")
        info = info + (z - model.fc_bias) @ spd_inverse(model.fc_cov)
    # Matrices are symmetric, so row-vector products equal their transposes.
    return info @ cov


def eiv_posterior(model: EivModel, y, z) -> MvGaussianParams:
    """[X | Y = y, Z = z] under the EIV model."""
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    if y.shape != (model.dim,) or z.shape != (model.dim,):
        raise DomainError("y and z must be vectors of the model dimension")
    return MvGaussianParams(eiv_posterior_mean(model, y, z), eiv_posterior_covariance(model))


def sample_model_a(model: ModelA, n, seed, **kw):
    """Joint draws ``(x, y)`` from Model A."""
    mu0, s0 = model.truth.mean, model.truth.sd
    w = math.sqrt(model.noise_variance)

    def draw(gen, m):
        x = mu0 + s0 * gen.standard_normal(m)
        return x, x + w * gen.standard_normal(m)

    return chunked_draw(seed, n, draw, **kw)


def sample_model_b(model: ModelB, n, seed, **kw):
    """Joint draws ``(x, y)`` from Model B."""
    a0, b0 = model.truth.shape, model.truth.rate
    a, b = model.error.shape, model.error.scale

    def draw(gen, m):
        x = gen.standard_gamma(a0, m) / b0
        return x, x * (b / gen.standard_gamma(a, m))

    return chunked_draw(seed, n, draw, **kw)


def sample_eiv(model: EivModel, n, seed, **kw):
    """Joint draws ``(x, y, z)``, each of shape ``(n, d)``."""
    d = model.dim
    mu, lx = model.truth.mean, model.truth.cholesky
    alpha, ld = model._obs_law.mean, model._obs_law.cholesky
    beta, lo = model._fc_law.mean, model._fc_law.cholesky

    def draw(gen, m):
        x = mu + gen.standard_normal((m, d)) @ lx.T
        y = x + alpha + gen.standard_normal((m, d)) @ ld.T
        z = x + beta + gen.standard_normal((m, d)) @ lo.T
        return x, y, z

    return chunked_draw(seed, n, draw, **kw)

"""Exact laws of the Gaussian log scores under Model A.

Each score is an affine function of a squared Gaussian, hence of the form
``a + b * chi2_1(lambda)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .distributions import AffineNcChiSq, GaussianParams
from .errors import DomainError
from .models import ModelA

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class ScoreLawTriple:
    """Laws of the wedge score, the vee score and the base score at ``Y``.

    ``law_truth`` (base score at the hidden ``X``) is carried as well; its mean
    is ``common_mean``.
    """

    law_wedge: AffineNcChiSq
    law_vee: AffineNcChiSq
    law_base_on_marginal: AffineNcChiSq
    law_truth: AffineNcChiSq
    common_mean: float


def expected_truth_log_score(f: GaussianParams, model: ModelA) -> float:
    """E[s0(f, X)] = log sigma + ((mu0 - mu)^2 + s0^2) / (2 sigma^2) + log(2 pi) / 2."""
    mu0, s02 = model.truth.mean, model.truth.variance
    return 0.5 * math.log(f.variance) + ((mu0 - f.mean) ** 2 + s02) / (2.0 * f.variance) + _HALF_LOG_2PI


def build_score_laws(f: GaussianParams, model: ModelA) -> ScoreLawTriple:
    if f.variance <= 0:
        raise DomainError("forecast variance must be positive")
    var = f.variance
    s02, w2 = model.truth.variance, model.noise_variance
    total = s02 + w2
    shrink = s02 / total
    log_sd = 0.5 * math.log(var)
    bias2 = (model.truth.mean - f.mean) ** 2

    b_wedge = total / (2.0 * var)
    lam_wedge = bias2 / total
    wedge = AffineNcChiSq(log_sd - w2 / (2.0 * var) + _HALF_LOG_2PI, b_wedge, lam_wedge)
    vee = AffineNcChiSq(
        log_sd + w2 * s02 / (2.0 * var * total) + _HALF_LOG_2PI,
        b_wedge * shrink**2,
        lam_wedge / shrink**2,
    )
    # Y ~ N(mu0, s0^2 + omega^2): same scale and noncentrality as the wedge law.
    base_y = AffineNcChiSq(log_sd + _HALF_LOG_2PI, b_wedge, lam_wedge)
    truth = AffineNcChiSq(log_sd + _HALF_LOG_2PI, s02 / (2.0 * var), bias2 / s02)
    return ScoreLawTriple(wedge, vee, base_y, truth, expected_truth_log_score(f, model))


def variance_ratio(f: GaussianParams, model: ModelA) -> float:
    """Var[wedge score] / Var[vee score] = (1 + 2 lam) / (p^2 + 2 p lam).

    ``lam`` is the wedge noncentrality and ``p = (s0^2 / (s0^2 + omega^2))^2``.
    """
    if f.variance <= 0:
        raise DomainError("forecast variance must be positive")
    s02, w2 = model.truth.variance, model.noise_variance
    lam = (model.truth.mean - f.mean) ** 2 / (s02 + w2)
    p = (s02 / (s02 + w2)) ** 2
    return (1.0 + 2.0 * lam) / (p * p + 2.0 * p * lam)

"""Parameter records, densities and seeded samplers.

Sampling is chunked: a draw of size ``n`` is split into blocks of
``CHUNK_SIZE`` and block ``k`` is generated by a Philox counter-based stream
keyed on ``(seed, stream, k)``. The output therefore depends only on
``(params, n, seed)``, whatever the number of worker threads.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .numerics import gamma_q, log_gamma, normal_cdf

CHUNK_SIZE = 1 << 16
_UINT64_MAX = (1 << 64) - 1


@dataclass(frozen=True)
class RngSeed:
    seed: int = 0
    stream: int = 0

    def __post_init__(self):
        for name in ("seed", "stream"):
            v = getattr(self, name)
            if int(v) != v or not 0 <= v <= _UINT64_MAX:
                raise DomainError(f"{name} must be an unsigned 64-bit integer")

    def generator(self, chunk: int = 0, substream: int = 0) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream), int(substream), int(chunk)))
        return np.random.Generator(np.random.Philox(ss))

    def child(self, substream: int) -> "RngSeed":
        """Independent seed for a sub-experiment, derived deterministically."""
        ss = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream), int(substream), _UINT64_MAX))
        return RngSeed(int(ss.generate_state(1, np.uint64)[0]), int(self.stream))


def as_seed(seed) -> RngSeed:
    if isinstance(seed, RngSeed):
        return seed
    return RngSeed(int(seed))


def _check_n(n):
    if int(n) != n or n < 1:
        raise DomainError("sample size n must be a positive integer")
    return int(n)


def chunked_draw(seed, n, draw, *, threads: int = 1, substream: int = 0):
    """Run ``draw(generator, m)`` over fixed-size chunks and concatenate.

    ``draw`` must return an array whose first axis has length ``m``, or a tuple
    of such arrays.
    """
    seed = as_seed(seed)
    n = _check_n(n)
    sizes = [min(CHUNK_SIZE, n - start) for start in range(0, n, CHUNK_SIZE)]

    def one(k):
        return draw(seed.generator(k, substream), sizes[k])

    if threads > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(one, range(len(sizes))))
    else:
        parts = [one(k) for k in range(len(sizes))]
    if isinstance(parts[0], tuple):
        return tuple(np.concatenate(p) for p in zip(*parts))
    return np.concatenate(parts)


@dataclass(frozen=True)
class GaussianParams:
    """Normal law N(mean, variance).

    ``variance == 0`` is accepted as an explicit point mass; scores reject it as
    a forecast.
    """

    mean: float
    variance: float

    def __post_init__(self):
        if not (math.isfinite(self.mean) and math.isfinite(self.variance)):
            raise DomainError("Gaussian parameters must be finite")
        if self.variance < 0:
            raise DomainError("variance must be nonnegative")

    @property
    def sd(self) -> float:
        return math.sqrt(self.variance)

    @property
    def is_degenerate(self) -> bool:
        return self.variance == 0

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        return -0.5 * np.log(2 * np.pi * self.variance) - (x - self.mean) ** 2 / (2 * self.variance)

    def cdf(self, x):
        return normal_cdf((np.asarray(x, dtype=float) - self.mean) / self.sd)

    def sample(self, n, seed, **kw):
        return sample_gaussian(self, n, seed, **kw)


@dataclass(frozen=True)
class GammaParams:
    """Gamma law with shape and rate, density proportional to x^(shape-1) e^(-rate x)."""

    shape: float
    rate: float

    def __post_init__(self):
        if not (self.shape > 0 and self.rate > 0 and math.isfinite(self.shape) and math.isfinite(self.rate)):
            raise DomainError("gamma shape and rate must be positive and finite")

    @property
    def mean(self) -> float:
        return self.shape / self.rate

    @property
    def variance(self) -> float:
        return self.shape / self.rate**2

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        a, b = self.shape, self.rate
        return a * np.log(b) - log_gamma(a) + (a - 1) * np.log(x) - b * x

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def sf(self, x):
        return gamma_q(self.shape, self.rate * np.asarray(x, dtype=float))

    def cdf(self, x):
        return 1.0 - np.asarray(self.sf(x))

    def sample(self, n, seed, **kw):
        return sample_gamma(self, n, seed, **kw)


@dataclass(frozen=True)
class InvGammaParams:
    """Inverse gamma law: reciprocal of Gamma(shape, rate=scale)."""

    shape: float
    scale: float

    def __post_init__(self):
        if not (self.shape > 0 and self.scale > 0 and math.isfinite(self.shape) and math.isfinite(self.scale)):
            raise DomainError("inverse gamma shape and scale must be positive and finite")

    @property
    def mean(self) -> float:
        if self.shape <= 1:
            return math.inf
        return self.scale / (self.shape - 1)

    @property
    def variance(self) -> float:
        if self.shape <= 2:
            return math.inf
        return self.scale**2 / ((self.shape - 1) ** 2 * (self.shape - 2))

    def cdf(self, x):
        return gamma_q(self.shape, self.scale / np.asarray(x, dtype=float))

    def sample(self, n, seed, **kw):
        return sample_inv_gamma(self, n, seed, **kw)


@dataclass(frozen=True, eq=False)
class MvGaussianParams:
    """Multivariate normal law; the covariance must factorise (SPD)."""

    mean: np.ndarray
    covariance: np.ndarray
    cholesky: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float, ndmin=1)
        cov = np.array(self.covariance, dtype=float, ndmin=2)
        d = mean.shape[0]
        if mean.ndim != 1 or cov.shape != (d, d):
            raise DomainError("mean must be a vector and covariance a matching square matrix")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise DomainError("multivariate Gaussian parameters must be finite")
        if np.max(np.abs(cov - cov.T), initial=0.0) > 1e-12:
            raise DomainError("covariance must be symmetric")
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise DomainError("covariance is not positive definite") from exc
        mean.setflags(write=False)
        cov.setflags(write=False)
        chol.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)
        object.__setattr__(self, "cholesky", chol)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def logdet(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.cholesky))))

    def precision(self) -> np.ndarray:
        return spd_inverse(self.covariance)

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        resid = np.atleast_2d(x - self.mean)
        sol = np.linalg.solve(self.cholesky, resid.T)
        quad = np.sum(sol * sol, axis=0)
        out = -0.5 * (self.dim * math.log(2 * math.pi) + self.logdet + quad)
        return float(out[0]) if x.ndim == 1 else out

    def sample(self, n, seed, **kw):
        return sample_mv_gaussian(self, n, seed, **kw)

    def __eq__(self, other):
        if not isinstance(other, MvGaussianParams):
            return NotImplemented
        return np.array_equal(self.mean, other.mean) and np.array_equal(self.covariance, other.covariance)

    __hash__ = None


def spd_inverse(matrix) -> np.ndarray:
    """Inverse of a symmetric positive-definite matrix via Cholesky."""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    try:
        chol = np.linalg.cholesky(matrix)
    except np.linalg.LinAlgError as exc:
        raise DomainError("matrix is not symmetric positive definite") from exc
    inv_chol = np.linalg.solve(chol, np.eye(matrix.shape[0]))
    inv = inv_chol.T @ inv_chol
    return 0.5 * (inv + inv.T)


@dataclass(frozen=True)
class AffineNcChiSq:
    """Law of ``offset + scale * chi2_1(noncentrality)``."""

    offset: float
    scale: float
    noncentrality: float
    dof: int = 1

    def __post_init__(self):
        if not self.scale > 0:
            raise DomainError("scale must be positive")
        if not self.noncentrality >= 0:
            raise DomainError("noncentrality must be nonnegative")
        if self.dof != 1:
            raise DomainError("only one degree of freedom is supported")

    @property
    def mean(self) -> float:
        return self.offset + self.scale * (1.0 + self.noncentrality)

    @property
    def variance(self) -> float:
        return self.scale**2 * 2.0 * (1.0 + 2.0 * self.noncentrality)

    def cdf(self, s):
        return nc_chisq_cdf(self, s)

    def pdf(self, s):
        return nc_chisq_pdf(self, s)

    def sample(self, n, seed, **kw):
        root = math.sqrt(self.noncentrality)

        def draw(gen, m):
            return self.offset + self.scale * (gen.standard_normal(m) + root) ** 2

        return chunked_draw(seed, n, draw, **kw)


def nc_chisq_cdf(law: AffineNcChiSq, s):
    """P(law <= s), exact for one degree of freedom.

    With t = (s - offset) / scale the event is |N + sqrt(lambda)| <= sqrt(t).
    """
    s = np.asarray(s, dtype=float)
    t = np.maximum((s - law.offset) / law.scale, 0.0)
    root_t = np.sqrt(t)
    root_l = math.sqrt(law.noncentrality)
    lo = np.asarray(normal_cdf(root_t - root_l))
    hi = np.asarray(normal_cdf(-root_t - root_l))
    out = np.where(s <= law.offset, 0.0, np.clip(lo - hi, 0.0, 1.0))
    return float(out) if out.ndim == 0 else out


def nc_chisq_pdf(law: AffineNcChiSq, s):
    """Density of ``offset + scale * chi2_1(lambda)``; zero at and below the offset."""
    s = np.asarray(s, dtype=float)
    t = (s - law.offset) / law.scale
    inside = t > 0
    tt = np.where(inside, t, 1.0)
    root_t = np.sqrt(tt)
    root_l = math.sqrt(law.noncentrality)
    dens = (np.exp(-0.5 * (root_t - root_l) ** 2) + np.exp(-0.5 * (root_t + root_l) ** 2)) / (
        2.0 * root_t * math.sqrt(2 * math.pi) * law.scale
    )
    out = np.where(inside, dens, 0.0)
    return float(out) if out.ndim == 0 else out


def sample_gaussian(params: GaussianParams, n, seed, **kw):
    mean, sd = params.mean, params.sd

    def draw(gen, m):
        return mean + sd * gen.standard_normal(m)

    return chunked_draw(seed, n, draw, **kw)


def sample_gamma(params: GammaParams, n, seed, **kw):
    shape, rate = params.shape, params.rate

    def draw(gen, m):
        return gen.standard_gamma(shape, m) / rate

    return chunked_draw(seed, n, draw, **kw)


def sample_inv_gamma(params: InvGammaParams, n, seed, **kw):
    shape, scale = params.shape, params.scale

    def draw(gen, m):
        return scale / gen.standard_gamma(shape, m)

    return chunked_draw(seed, n, draw, **kw)


def sample_mv_gaussian(params: MvGaussianParams, n, seed, **kw):
    """Draw an ``(n, d)`` matrix of rows from ``params``."""
    mean, chol = params.mean, params.cholesky

    def draw(gen, m):
        return mean + gen.standard_normal((m, mean.shape[0])) @ chol.T

    return chunked_draw(seed, n, draw, **kw)

"""Seeded Monte Carlo experiments on score distributions.

An experiment draws ``n`` joint samples from a noise model, evaluates the
requested score streams on them and summarises each stream. The streams are

``none_on_truth``  base score at the hidden truth X
``none_on_obs``    base score at the observation Y
``wedge``          wedge-corrected score at Y (Model A, log score)
``vee``            E[s0(f, X) | Y]
``vee_joint``      E[s0(f, X) | Y, Z] (EIV)
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .distributions import GammaParams, GaussianParams, MvGaussianParams, RngSeed, as_seed
from .errors import ConfigError
from .models import EivModel, ModelA, ModelB, sample_eiv, sample_model_a, sample_model_b
from .numerics import QuadratureSpec
from .score_laws import build_score_laws, expected_truth_log_score
from . import scores as sc
from .scores import Forecast, ScoreKind

log = logging.getLogger(__name__)

Model = Union[ModelA, ModelB, EivModel]


class Stream(str, enum.Enum):
    NONE_ON_TRUTH = "none_on_truth"
    NONE_ON_OBS = "none_on_obs"
    WEDGE = "wedge"
    VEE = "vee"
    VEE_JOINT = "vee_joint"


CURVE_LABELS = {
    Stream.NONE_ON_TRUTH: "base-on-truth",
    Stream.NONE_ON_OBS: "base-on-marginal",
    Stream.WEDGE: "wedge",
    Stream.VEE: "vee",
    Stream.VEE_JOINT: "vee-joint",
}

# Streams compared by the variance inequalities, larger variance first.
INEQUALITY_PAIRS = ((Stream.WEDGE, Stream.VEE), (Stream.VEE, Stream.VEE_JOINT))


@dataclass(frozen=True)
class DensityGrid:
    lo: float
    hi: float
    points: int

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi) and self.lo < self.hi):
            raise ConfigError("density grid needs finite lo < hi")
        if int(self.points) != self.points or self.points < 2:
            raise ConfigError("density grid needs at least 2 points")

    def abscissae(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, int(self.points))


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    model: Model
    forecast: Forecast
    score_kind: ScoreKind
    corrections: tuple
    n: int
    seed: RngSeed = field(default_factory=RngSeed)
    density_grid: DensityGrid | None = None
    bandwidth: float | None = None
    quadrature: QuadratureSpec = field(default_factory=QuadratureSpec)
    threads: int = 1

    def __post_init__(self):
        try:
            kind = ScoreKind(self.score_kind)
            streams = tuple(Stream(c) for c in self.corrections)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        object.__setattr__(self, "score_kind", kind)
        object.__setattr__(self, "corrections", streams)
        object.__setattr__(self, "seed", as_seed(self.seed))
        if int(self.n) != self.n or self.n < 2:
            raise ConfigError("n must be an integer >= 2")
        if not streams or len(set(streams)) != len(streams):
            raise ConfigError("corrections must be a non-empty set")
        if self.bandwidth is not None and not self.bandwidth > 0:
            raise ConfigError("bandwidth must be positive")
        if int(self.threads) != self.threads or self.threads < 1:
            raise ConfigError("threads must be a positive integer")

        model, f = self.model, self.forecast
        if isinstance(model, ModelA):
            if not isinstance(f, GaussianParams) or f.variance <= 0:
                raise ConfigError("additive Gaussian model needs a non-degenerate Gaussian forecast")
        elif isinstance(model, ModelB):
            if not isinstance(f, GammaParams):
                raise ConfigError("multiplicative gamma model needs a gamma forecast")
        elif isinstance(model, EivModel):
            if not isinstance(f, MvGaussianParams) or f.dim != model.dim:
                raise ConfigError("EIV model needs a multivariate Gaussian forecast of matching dimension")
            if kind is not ScoreKind.LOG:
                raise ConfigError("only the log score is available under the EIV model")
        else:
            raise ConfigError(f"unsupported model type {type(model).__name__}")

        if Stream.WEDGE in streams and not (isinstance(model, ModelA) and kind is ScoreKind.LOG):
            raise ConfigError("the wedge correction exists only for the log score under the additive Gaussian model")
        if Stream.VEE_JOINT in streams and not isinstance(model, EivModel):
            raise ConfigError("vee_joint requires the EIV model")


@dataclass(frozen=True)
class StreamSummary:
    mean: float
    variance: float
    mean_std_error: float
    variance_std_error: float


@dataclass(frozen=True)
class McSummary:
    records: dict
    n: int
    seed: RngSeed


@dataclass(frozen=True)
class InequalityReport:
    holds: bool
    pairs: tuple
    margins: tuple
    differences: tuple
    summary: McSummary


class CurveKind(str, enum.Enum):
    ANALYTIC = "analytic"
    KERNEL_ESTIMATE = "kernel_estimate"
    MEAN_MARKER = "mean_marker"


@dataclass(frozen=True, eq=False)
class DensityCurve:
    abscissae: np.ndarray
    ordinates: np.ndarray
    kind: CurveKind
    label: str
    coverage: float = 1.0

    def __post_init__(self):
        if len(self.abscissae) != len(self.ordinates):
            raise ValueError("abscissae and ordinates must have equal lengths")

    def integral(self) -> float:
        return float(np.trapezoid(self.ordinates, self.abscissae))


# --- sampling ---------------------------------------------------------------


def score_samples(config: ExperimentConfig) -> dict:
    """Evaluate every requested stream on one shared set of joint draws."""
    model, f, kind = config.model, config.forecast, config.score_kind
    seed, n, threads = config.seed, int(config.n), config.threads
    out = {}

    if isinstance(model, ModelA):
        x, y = sample_model_a(model, n, seed, threads=threads)
        vee = sc.vee_log_score_gaussian if kind is ScoreKind.LOG else sc.vee_crps_gaussian
        for s in config.corrections:
            if s is Stream.NONE_ON_TRUTH:
                out[s] = sc.base_score(kind, f, x).value
            elif s is Stream.NONE_ON_OBS:
                out[s] = sc.base_score(kind, f, y).value
            elif s is Stream.WEDGE:
                out[s] = sc.wedge_log_score_gaussian(f, y, model.noise_variance).value
            elif s is Stream.VEE:
                out[s] = vee(f, y, model).value

    elif isinstance(model, ModelB):
        x, y = sample_model_b(model, n, seed, threads=threads)
        for s in config.corrections:
            if s is Stream.NONE_ON_TRUTH:
                out[s] = sc.base_score(kind, f, x).value
            elif s is Stream.NONE_ON_OBS:
                out[s] = sc.base_score(kind, f, y).value
            elif s is Stream.VEE and kind is ScoreKind.LOG:
                out[s] = sc.vee_log_score_gamma(f, y, model).value
            elif s is Stream.VEE:
                out[s] = _batched_vee_crps_gamma(f, y, model, config.quadrature)

    else:
        x, y, z = sample_eiv(model, n, seed, threads=threads)
        for s in config.corrections:
            if s is Stream.NONE_ON_TRUTH:
                out[s] = sc.log_score_mv_gaussian(f, x).value
            elif s is Stream.NONE_ON_OBS:
                out[s] = sc.log_score_mv_gaussian(f, y).value
            elif s is Stream.VEE:
                out[s] = sc.eiv_vee_log_score(f, y, None, model).value
            elif s is Stream.VEE_JOINT:
                out[s] = sc.eiv_vee_log_score(f, y, z, model).value
    return out


def _batched_vee_crps_gamma(f, y, model, spec, block=1 << 15):
    parts = []
    worst = 0.0
    for start in range(0, y.shape[0], block):
        sv = sc.vee_crps_gamma(f, y[start : start + block], model, spec, method="fixed")
        parts.append(np.atleast_1d(sv.value))
        worst = max(worst, sv.numeric_error)
    log.debug("batched gamma CRPS quadrature error <= %.3g", worst)
    return np.concatenate(parts)


# --- summaries --------------------------------------------------------------


def summarize(values: np.ndarray) -> StreamSummary:
    """Mean, variance and their standard errors.

    The variance standard error uses the delta method,
    Var(s^2) ~ (m4 - s^4) / n with m4 the fourth central moment.
    """
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    mean = float(np.mean(values))
    centred = values - mean
    var = float(np.sum(centred * centred) / (n - 1))
    m4 = float(np.mean(centred**4))
    return StreamSummary(
        mean=mean,
        variance=var,
        mean_std_error=math.sqrt(var / n),
        variance_std_error=math.sqrt(max(m4 - var * var, 0.0) / n),
    )


def run_experiment(config: ExperimentConfig) -> McSummary:
    samples = score_samples(config)
    records = {s.value: summarize(samples[s]) for s in config.corrections}
    return McSummary(records=records, n=int(config.n), seed=config.seed)


def check_variance_inequality(config: ExperimentConfig, summary: McSummary | None = None) -> InequalityReport:
    """Check Var[wedge] >= Var[vee] and/or Var[vee] >= Var[vee_joint].

    A pair holds when the variance difference exceeds -2 combined standard
    errors. ``margins`` are the differences in units of that combined error.
    """
    pairs = tuple(
        (hi, lo) for hi, lo in INEQUALITY_PAIRS if hi in config.corrections and lo in config.corrections
    )
    if not pairs:
        raise ConfigError("variance inequality needs {wedge, vee} or {vee, vee_joint} among the corrections")
    summary = summary or run_experiment(config)
    margins, diffs = [], []
    for hi, lo in pairs:
        a, b = summary.records[hi.value], summary.records[lo.value]
        diff = a.variance - b.variance
        se = math.hypot(a.variance_std_error, b.variance_std_error)
        diffs.append(diff)
        margins.append(diff / se if se > 0 else (0.0 if diff == 0 else math.copysign(math.inf, diff)))
    holds = all(m > -2.0 for m in margins)
    return InequalityReport(
        holds=holds,
        pairs=tuple((hi.value, lo.value) for hi, lo in pairs),
        margins=tuple(margins),
        differences=tuple(diffs),
        summary=summary,
    )


def expected_truth_score(config: ExperimentConfig) -> float:
    """E[s0(f, X)]: the mean shared by the truth score and every correction."""
    model, f, kind = config.model, config.forecast, config.score_kind
    if isinstance(model, ModelA):
        if kind is ScoreKind.LOG:
            return expected_truth_log_score(f, model)
        return sc.crps_expectation_gaussian(f, model.truth)
    if isinstance(model, ModelB):
        if kind is ScoreKind.LOG:
            return sc.expected_log_score_gamma(f, model.truth)
        return sc.crps_expectation_gamma(f, model.truth, config.quadrature)[0]
    return sc.expected_log_score_mv_gaussian(f, model.truth)


# --- densities --------------------------------------------------------------


def default_bandwidth(values: np.ndarray) -> float:
    """0.9 min(sd, IQR / 1.34) n^(-1/5)."""
    values = np.asarray(values, dtype=float)
    sd = float(np.std(values, ddof=1))
    q75, q25 = np.percentile(values, [75, 25])
    spread = min(sd, (q75 - q25) / 1.34) or sd
    return 0.9 * spread * values.shape[0] ** -0.2


def kernel_density(values: np.ndarray, grid: np.ndarray, bandwidth: float | None = None) -> np.ndarray:
    """Gaussian kernel density estimate of ``values`` on ``grid``.

    Large samples are first binned on a mesh much finer than the bandwidth.
    """
    values = np.asarray(values, dtype=float)
    h = bandwidth or default_bandwidth(values)
    if values.shape[0] * grid.shape[0] > 20_000_000:
        lo, hi = values.min(), values.max()
        nbins = max(256, int(math.ceil((hi - lo) / (h / 25.0))))
        counts, edges = np.histogram(values, bins=nbins, range=(lo, hi))
        centres = 0.5 * (edges[:-1] + edges[1:])
        keep = counts > 0
        centres, weights = centres[keep], counts[keep].astype(float)
    else:
        centres, weights = values, np.ones_like(values)
    dens = np.zeros_like(grid, dtype=float)
    block = max(1, 4_000_000 // max(grid.shape[0], 1))
    for start in range(0, centres.shape[0], block):
        u = (grid[:, None] - centres[None, start : start + block]) / h
        dens += np.exp(-0.5 * u * u) @ weights[start : start + block]
    return dens / (weights.sum() * h * math.sqrt(2.0 * math.pi))


def _analytic_abscissae(grid: DensityGrid, law) -> np.ndarray:
    """Uniform grid plus geometric refinement next to the support edge.

    The densities behave like (s - a)^(-1/2) near the offset ``a``; the
    refinement keeps trapezoid integration accurate there.
    """
    base = grid.abscissae()
    step = (grid.hi - grid.lo) / (grid.points - 1)
    t = np.geomspace(1e-12 * law.scale, 20.0 * step, 240)
    extra = law.offset + np.concatenate([[0.0], t])
    extra = extra[(extra >= grid.lo) & (extra <= grid.hi)]
    return np.unique(np.concatenate([base, extra]))


def density_curves(config: ExperimentConfig) -> list:
    """Density curves of every requested stream plus a common-mean marker.

    Model A log scores get exact curves; all other settings get kernel
    estimates from ``config.n`` Monte Carlo scores. ``coverage`` on each curve
    is the probability mass inside the grid; values below 0.99 are logged.
    """
    grid = config.density_grid
    if grid is None:
        raise ConfigError("density_curves needs a density_grid")
    curves = []
    if isinstance(config.model, ModelA) and config.score_kind is ScoreKind.LOG:
        laws = build_score_laws(config.forecast, config.model)
        by_stream = {
            Stream.NONE_ON_TRUTH: laws.law_truth,
            Stream.NONE_ON_OBS: laws.law_base_on_marginal,
            Stream.WEDGE: laws.law_wedge,
            Stream.VEE: laws.law_vee,
        }
        for s in config.corrections:
            law = by_stream[s]
            xs = _analytic_abscissae(grid, law)
            coverage = float(law.cdf(grid.hi) - law.cdf(grid.lo))
            curves.append(DensityCurve(xs, law.pdf(xs), CurveKind.ANALYTIC, CURVE_LABELS[s], coverage))
    else:
        samples = score_samples(config)
        xs = grid.abscissae()
        for s in config.corrections:
            v = samples[s]
            coverage = float(np.mean((v >= grid.lo) & (v <= grid.hi)))
            dens = kernel_density(v, xs, config.bandwidth)
            curves.append(DensityCurve(xs, dens, CurveKind.KERNEL_ESTIMATE, CURVE_LABELS[s], coverage))
    for c in curves:
        if c.coverage < 0.99:
            log.warning("grid [%g, %g] holds only %.3f of the mass of %s", grid.lo, grid.hi, c.coverage, c.label)
    mean = expected_truth_score(config)
    # Height from the uniform grid; the refined edge points can be very large.
    top = max(float(np.max(np.interp(grid.abscissae(), c.abscissae, c.ordinates))) for c in curves)
    curves.append(DensityCurve(np.array([mean, mean]), np.array([0.0, top]), CurveKind.MEAN_MARKER, "common-mean"))
    return curves

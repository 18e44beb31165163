import logging
import math

import numpy as np
import pytest

from scorelab.distributions import GammaParams, GaussianParams, InvGammaParams, MvGaussianParams, RngSeed
from scorelab.errors import ConfigError
from scorelab.experiments import (
    CurveKind,
    DensityGrid,
    ExperimentConfig,
    Stream,
    check_variance_inequality,
    default_bandwidth,
    density_curves,
    expected_truth_score,
    kernel_density,
    run_experiment,
    score_samples,
    summarize,
)
from scorelab.models import EivModel, ModelA, ModelB
from scorelab.score_laws import build_score_laws

MODEL_A = ModelA(GaussianParams(1.0, 4.0), 1.0)
F02 = GaussianParams(0.0, 4.0)
GAMMA_TRUTH = GammaParams(2.0, 1.0)


def model_b(a):
    return ModelB(GAMMA_TRUTH, InvGammaParams(float(a), float(a - 1)))


def eiv_d1(omega=1.0):
    return EivModel(MvGaussianParams([0.0], [[1.0]]), [0.0], [[1.0]], [0.0], [[omega]])


F_MV = MvGaussianParams([0.0], [[1.0]])


class TestConfigValidation:
    @pytest.mark.parametrize(
        "model,forecast,kind,corrections",
        [
            (model_b(3), GammaParams(2, 1), "log", ("wedge",)),
            (MODEL_A, F02, "crps", ("wedge",)),
            (MODEL_A, F02, "log", ("vee_joint",)),
            (eiv_d1(), F_MV, "crps", ("vee",)),
            (MODEL_A, GammaParams(2, 1), "log", ("vee",)),
            (model_b(3), F02, "log", ("vee",)),
            (eiv_d1(), MvGaussianParams([0, 0], np.eye(2)), "log", ("vee",)),
            (MODEL_A, F02, "log", ()),
            (MODEL_A, F02, "log", ("vee", "vee")),
            (MODEL_A, F02, "energy", ("vee",)),
            (MODEL_A, F02, "log", ("median",)),
        ],
    )
    def test_rejected(self, model, forecast, kind, corrections):
        with pytest.raises(ConfigError):
            ExperimentConfig(model, forecast, kind, corrections, 100)

    @pytest.mark.parametrize("kw", [dict(n=1), dict(n=2.5), dict(bandwidth=0.0), dict(threads=0)])
    def test_scalar_fields(self, kw):
        args = dict(model=MODEL_A, forecast=F02, score_kind="log", corrections=("vee",), n=100) | kw
        with pytest.raises(ConfigError):
            ExperimentConfig(**args)

    @pytest.mark.parametrize("lo,hi,points", [(1, 1, 10), (2, 1, 10), (0, 1, 1), (0, float("inf"), 5)])
    def test_grid(self, lo, hi, points):
        with pytest.raises(ConfigError):
            DensityGrid(lo, hi, points)

    def test_enums_coerced(self):
        cfg = ExperimentConfig(MODEL_A, F02, "log", ["wedge", "vee"], 10, seed=3)
        assert cfg.corrections == (Stream.WEDGE, Stream.VEE)
        assert cfg.seed == RngSeed(3)


class TestSummaries:
    def test_summarize_known_values(self):
        s = summarize(np.array([1.0, 2.0, 3.0, 4.0]))
        assert s.mean == 2.5
        assert s.variance == pytest.approx(5 / 3)
        assert s.mean_std_error == pytest.approx(math.sqrt(5 / 12))
        assert s.variance_std_error >= 0

    def test_variance_se_for_gaussian(self):
        n = 10**6
        s = summarize(GaussianParams(0, 1).sample(n, 1))
        assert s.variance_std_error == pytest.approx(math.sqrt(2 / n), rel=0.02)

    def test_deterministic(self):
        cfg = ExperimentConfig(MODEL_A, F02, "log", ("none_on_truth", "wedge", "vee"), 150_000, RngSeed(5, 1))
        assert run_experiment(cfg) == run_experiment(cfg)

    def test_thread_invariance(self):
        kw = dict(model=model_b(4), forecast=GammaParams(2, 1), score_kind="crps",
                  corrections=("none_on_obs", "vee"), n=200_000, seed=RngSeed(6))
        assert run_experiment(ExperimentConfig(**kw)) == run_experiment(ExperimentConfig(**kw, threads=4))

    def test_seed_changes_results(self):
        a = run_experiment(ExperimentConfig(MODEL_A, F02, "log", ("vee",), 1000, RngSeed(1)))
        b = run_experiment(ExperimentConfig(MODEL_A, F02, "log", ("vee",), 1000, RngSeed(2)))
        assert a.records["vee"].mean != b.records["vee"].mean

    def test_zero_noise_streams_identical(self):
        cfg = ExperimentConfig(ModelA(GaussianParams(1, 4), 0.0), F02, "log",
                               ("none_on_truth", "none_on_obs", "wedge", "vee"), 10_000, RngSeed(7))
        s = score_samples(cfg)
        for stream in cfg.corrections[1:]:
            np.testing.assert_allclose(s[stream], s[Stream.NONE_ON_TRUTH], rtol=0, atol=1e-12)

    def test_spot_ratio(self):
        cfg = ExperimentConfig(MODEL_A, F02, "log", ("wedge", "vee"), 10**6, RngSeed(8))
        rec = run_experiment(cfg).records
        assert rec["wedge"].variance / rec["vee"].variance == pytest.approx(2.103365, rel=0.05)


class TestSharedMeans:
    @pytest.mark.parametrize(
        "model,forecast,kind,streams",
        [
            (MODEL_A, F02, "log", ("wedge", "vee")),
            (MODEL_A, F02, "crps", ("vee",)),
            (model_b(3), GammaParams(1.5, 0.8), "log", ("vee",)),
            (model_b(5), GammaParams(2.0, 1.0), "crps", ("vee",)),
            (eiv_d1(), F_MV, "log", ("vee", "vee_joint")),
        ],
    )
    def test_corrections_share_truth_mean(self, model, forecast, kind, streams):
        n = 10**6 if kind == "log" else 300_000
        cfg = ExperimentConfig(model, forecast, kind, ("none_on_truth",) + streams, n, RngSeed(9))
        rec = run_experiment(cfg).records
        truth = rec["none_on_truth"]
        target = expected_truth_score(cfg)
        assert abs(truth.mean - target) < 4 * truth.mean_std_error
        for s in streams:
            r = rec[s]
            assert abs(r.mean - truth.mean) < 4 * math.hypot(r.mean_std_error, truth.mean_std_error), s


class TestInequality:
    def test_needs_pair(self):
        with pytest.raises(ConfigError):
            check_variance_inequality(ExperimentConfig(MODEL_A, F02, "log", ("none_on_truth", "vee"), 100))

    def test_report_fields(self):
        cfg = ExperimentConfig(MODEL_A, F02, "log", ("wedge", "vee"), 100_000, RngSeed(10))
        rep = check_variance_inequality(cfg)
        assert rep.holds and rep.pairs == (("wedge", "vee"),)
        assert rep.margins[0] > 2 and rep.differences[0] > 0

    def test_eiv_variances_follow_information_ordering(self):
        # Var E[s | Y] = 1/8 and Var E[s | Y, Z] = 2/9 in this setting.
        cfg = ExperimentConfig(eiv_d1(), F_MV, "log", ("vee", "vee_joint"), 10**6, RngSeed(11))
        rep = check_variance_inequality(cfg)
        rec = rep.summary.records
        assert abs(rec["vee"].variance - 1 / 8) < 4 * rec["vee"].variance_std_error
        assert abs(rec["vee_joint"].variance - 2 / 9) < 4 * rec["vee_joint"].variance_std_error
        assert not rep.holds

    def test_uninformative_z_streams_agree(self):
        cfg = ExperimentConfig(eiv_d1(1e8), F_MV, "log", ("vee", "vee_joint"), 10**5, RngSeed(12))
        s = score_samples(cfg)
        # z itself is O(1e4) here, so z / Omega still shifts the posterior by O(1e-4).
        np.testing.assert_allclose(s[Stream.VEE], s[Stream.VEE_JOINT], atol=2e-3)


class TestGammaObservedScore:
    def test_observed_score_variance_shrinks_with_error_shape(self):
        variances, offsets = [], []
        for a in (3, 6, 12):
            cfg = ExperimentConfig(model_b(a), GammaParams(2.0, 1.0), "log",
                                   ("none_on_truth", "none_on_obs"), 400_000, RngSeed(13))
            rec = run_experiment(cfg).records
            obs, truth = rec["none_on_obs"], rec["none_on_truth"]
            variances.append(obs.variance)
            offsets.append((obs.mean - truth.mean) / math.hypot(obs.mean_std_error, truth.mean_std_error))
        assert variances[0] > variances[1] > variances[2]
        assert all(o > 4 for o in offsets)


class TestDensities:
    def test_kde_normalises_and_bins_consistently(self):
        x = GaussianParams(0, 1).sample(50_000, 14)
        grid = np.linspace(-6, 6, 601)
        exact = kernel_density(x, grid, 0.1)
        assert np.trapezoid(exact, grid) == pytest.approx(1.0, abs=1e-3)
        big = GaussianParams(0, 1).sample(400_000, 15)
        binned = kernel_density(big, grid)
        assert np.max(np.abs(binned - np.exp(-grid**2 / 2) / math.sqrt(2 * math.pi))) < 0.01

    def test_default_bandwidth(self):
        x = GaussianParams(0, 1).sample(100_000, 16)
        assert default_bandwidth(x) == pytest.approx(0.9 * 100_000 ** -0.2, rel=0.02)

    def test_analytic_curves_normalise(self):
        laws = build_score_laws(F02, MODEL_A)
        a = min(l.offset for l in (laws.law_wedge, laws.law_vee, laws.law_base_on_marginal))
        b = max(l.scale for l in (laws.law_wedge, laws.law_vee, laws.law_base_on_marginal))
        cfg = ExperimentConfig(MODEL_A, F02, "log", ("none_on_obs", "wedge", "vee"), 1000, RngSeed(17),
                               density_grid=DensityGrid(a, a + 40 * b, 801))
        curves = density_curves(cfg)
        labels = [c.label for c in curves if c.kind is CurveKind.ANALYTIC]
        assert labels == ["base-on-marginal", "wedge", "vee"]
        for c in curves[:-1]:
            assert c.integral() == pytest.approx(1.0, abs=0.01)
            assert np.all(c.ordinates >= 0)
        marker = curves[-1]
        assert marker.kind is CurveKind.MEAN_MARKER
        assert marker.abscissae[0] == pytest.approx(2.237086, abs=1e-6)

    def test_left_panel_mean(self):
        cfg = ExperimentConfig(MODEL_A, GaussianParams(1.0, 4.0), "log", ("wedge", "vee"), 1000,
                               density_grid=DensityGrid(1.0, 20.0, 501))
        curves = density_curves(cfg)
        assert curves[-1].abscissae[0] == pytest.approx(2.112086, abs=1e-6)
        for c in curves[:-1]:
            xs = c.abscissae
            assert np.trapezoid(xs * c.ordinates, xs) == pytest.approx(2.112086, abs=0.01)

    def test_kde_matches_analytic_vee(self):
        grid = DensityGrid(1.0, 12.0, 1101)
        analytic = density_curves(ExperimentConfig(MODEL_A, F02, "log", ("vee",), 10**5, RngSeed(18),
                                                   density_grid=grid))[0]
        samples = score_samples(ExperimentConfig(MODEL_A, F02, "log", ("vee",), 10**5, RngSeed(18)))[Stream.VEE]
        h = default_bandwidth(samples)
        law = build_score_laws(F02, MODEL_A).law_vee
        xs = grid.abscissae()
        xs = xs[xs >= law.offset + 5 * h]
        kde = kernel_density(samples, xs, h)
        assert np.max(np.abs(kde - np.interp(xs, analytic.abscissae, analytic.ordinates))) < 0.05

    def test_model_b_uses_kernel_estimates(self):
        cfg = ExperimentConfig(model_b(3), GammaParams(2, 1), "log", ("none_on_truth", "none_on_obs", "vee"),
                               50_000, RngSeed(19), density_grid=DensityGrid(0.0, 25.0, 1001))
        curves = density_curves(cfg)
        assert {c.kind for c in curves[:-1]} == {CurveKind.KERNEL_ESTIMATE}
        for c in curves[:-1]:
            assert c.integral() == pytest.approx(1.0, abs=0.02)

    def test_short_grid_warns(self, caplog):
        cfg = ExperimentConfig(MODEL_A, F02, "log", ("wedge",), 1000, density_grid=DensityGrid(1.0, 3.0, 101))
        with caplog.at_level(logging.WARNING, logger="scorelab"):
            curves = density_curves(cfg)
        assert curves[0].coverage < 0.99
        assert any("mass" in r.message for r in caplog.records)

    def test_needs_grid(self):
        with pytest.raises(ConfigError):
            density_curves(ExperimentConfig(MODEL_A, F02, "log", ("wedge",), 1000))

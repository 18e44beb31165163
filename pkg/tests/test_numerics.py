import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scorelab.errors import ConvergenceError, DomainError
from scorelab.numerics import (
    QuadratureSpec,
    beta_fn,
    digamma,
    gamma_expectation_fixed,
    gamma_q,
    integrate_semi_infinite,
    log_beta_fn,
    log_gamma,
    normal_cdf,
    normal_pdf,
    normal_sf,
    upper_incomplete_gamma,
)

mpmath.mp.dps = 40

positive = st.floats(min_value=1e-3, max_value=200.0, allow_nan=False)


class TestNormal:
    @pytest.mark.parametrize("z", [-37.0, -8.0, -1.5, 0.0, 0.3, 2.0, 8.0])
    def test_cdf_against_mpmath(self, z):
        assert normal_cdf(z) == pytest.approx(float(mpmath.ncdf(z)), rel=1e-14, abs=1e-300)

    @pytest.mark.parametrize("z", [-3.0, 0.0, 5.0, 20.0])
    def test_sf_tail_accuracy(self, z):
        assert normal_sf(z) == pytest.approx(float(1 - mpmath.ncdf(z)), rel=1e-14)

    def test_pdf_values(self):
        z = np.linspace(-6, 6, 13)
        expected = [float(mpmath.npdf(v)) for v in z]
        np.testing.assert_allclose(normal_pdf(z), expected, rtol=1e-15)

    def test_scalar_in_scalar_out(self):
        assert isinstance(normal_cdf(0.1), float)
        assert normal_cdf(np.array([0.0, 1.0])).shape == (2,)

    def test_rejects_nan(self):
        with pytest.raises(DomainError):
            normal_cdf(float("nan"))


class TestGammaFamily:
    @pytest.mark.parametrize("x", [1e-8, 0.5, 1.0, 3.7, 50.0, 1e5])
    def test_log_gamma_against_mpmath(self, x):
        assert log_gamma(x) == pytest.approx(float(mpmath.loggamma(x)), rel=1e-14, abs=1e-15)

    @pytest.mark.parametrize("x", [1e-6, 0.25, 1.0, 2.5, 40.0, 1e4])
    def test_digamma_against_mpmath(self, x):
        assert digamma(x) == pytest.approx(float(mpmath.digamma(x)), rel=1e-13, abs=1e-14)

    def test_digamma_at_one(self):
        assert digamma(1.0) == pytest.approx(-0.5772156649015329, rel=1e-15)

    @given(positive)
    def test_log_gamma_recurrence(self, x):
        assert log_gamma(x + 1) == pytest.approx(log_gamma(x) + math.log(x), rel=1e-12, abs=1e-12)

    @given(positive)
    def test_digamma_recurrence(self, x):
        assert digamma(x + 1) == pytest.approx(digamma(x) + 1 / x, rel=1e-12, abs=1e-12)

    @pytest.mark.parametrize("a,x", [(0.5, 0.1), (2.0, 3.0), (7.5, 2.0), (30.0, 45.0), (1.0, 0.0)])
    def test_gamma_q_against_mpmath(self, a, x):
        expected = float(mpmath.gammainc(a, x, mpmath.inf, regularized=True))
        assert gamma_q(a, x) == pytest.approx(expected, rel=1e-12)

    def test_upper_incomplete_unregularised(self):
        assert upper_incomplete_gamma(2.0, 1.5) == pytest.approx(float(mpmath.gammainc(2.0, 1.5)), rel=1e-13)

    def test_q_of_one_is_exponential(self):
        x = np.linspace(0, 10, 11)
        np.testing.assert_allclose(gamma_q(1.0, x), np.exp(-x), rtol=1e-14)

    @given(positive, positive)
    def test_beta_symmetry_and_identity(self, p, q):
        assert log_beta_fn(p, q) == pytest.approx(log_beta_fn(q, p), rel=1e-12, abs=1e-12)
        expected = log_gamma(p) + log_gamma(q) - log_gamma(p + q)
        assert log_beta_fn(p, q) == pytest.approx(expected, rel=1e-12, abs=1e-12)

    def test_beta_value(self):
        assert beta_fn(0.5, 0.5) == pytest.approx(math.pi, rel=1e-14)

    @pytest.mark.parametrize(
        "fn,args",
        [(log_gamma, (0.0,)), (digamma, (-1.0,)), (gamma_q, (0.0, 1.0)), (gamma_q, (1.0, -1.0)), (log_beta_fn, (1.0, 0.0))],
    )
    def test_domain_errors(self, fn, args):
        with pytest.raises(DomainError):
            fn(*args)


class TestQuadrature:
    def test_settings_validation(self):
        with pytest.raises(DomainError):
            QuadratureSpec(relative_tolerance=0.0)
        with pytest.raises(DomainError):
            QuadratureSpec(node_count=1)

    @pytest.mark.parametrize("a,b", [(0.5, 1.0), (2.0, 0.3), (10.0, 4.0)])
    def test_gamma_kernel(self, a, b):
        # integral of x^(a-1) exp(-b x) is Gamma(a) / b^a
        value, err = integrate_semi_infinite(lambda x: x ** (a - 1) * np.exp(-b * x), scale=a / b)
        assert value == pytest.approx(math.gamma(a) / b**a, rel=1e-8)
        assert err <= 1e-8 * value

    @pytest.mark.parametrize("tol", [1e-6, 1e-9, 1e-12])
    def test_tolerance_grid(self, tol):
        value, _ = integrate_semi_infinite(lambda x: 1.0 / (1.0 + x * x), QuadratureSpec(relative_tolerance=tol))
        assert abs(value - math.pi / 2) <= 10 * tol * math.pi / 2

    def test_nonconvergence_raises_with_estimate(self):
        with pytest.raises(ConvergenceError) as info:
            integrate_semi_infinite(
                lambda x: np.sin(50 * x) ** 2 / (1 + x) ** 1.01,
                QuadratureSpec(relative_tolerance=1e-12, max_subdivisions=5),
            )
        assert info.value.estimate is not None

    def test_fixed_rule_matches_moments(self):
        shape, rate = 3.5, np.array([0.5, 2.0, 7.0])
        mean, err = gamma_expectation_fixed(lambda x: x, shape, rate, 32)
        np.testing.assert_allclose(mean, shape / rate, rtol=1e-13)
        assert np.all(err < 1e-12)
        second, _ = gamma_expectation_fixed(lambda x: x * x, shape, rate, 32)
        np.testing.assert_allclose(second, shape * (shape + 1) / rate**2, rtol=1e-12)

    def test_fixed_rule_matches_adaptive(self):
        func = lambda x: np.exp(-x) * np.log1p(x)  # noqa: E731
        shape, rate = 4.0, 1.5
        fixed, _ = gamma_expectation_fixed(func, shape, rate, 96)
        log_norm = shape * math.log(rate) - math.lgamma(shape)
        adaptive, _ = integrate_semi_infinite(
            lambda x: func(x) * np.exp(log_norm + (shape - 1) * np.log(x) - rate * x), scale=shape / rate
        )
        assert fixed == pytest.approx(adaptive, rel=1e-10)

    @settings(max_examples=25, deadline=None)
    @given(st.floats(0.2, 40.0), st.floats(0.05, 20.0))
    def test_fixed_rule_normalised(self, shape, rate):
        value, _ = gamma_expectation_fixed(lambda x: np.ones_like(x), shape, rate, 64)
        assert value == pytest.approx(1.0, rel=1e-12)

"""Jittered Cholesky ladder, solves, log-det, and conditioning diagnostics."""

import numpy as np
import pytest

from gpmle.errors import AllJitterFailed, DegenerateLogDet
from gpmle.linalg import (
    MINIMAL_JITTER,
    cholesky_with_jitter,
    conditioning_report,
    log_det,
    measure_numerical_noise,
    solve,
)


def _random_spd(rng, n):
    A = rng.normal(size=(n, n))
    return A @ A.T + n * np.eye(n)


class TestCholeskyWithJitter:
    def test_identity_needs_only_minimal_jitter(self):
        chol = cholesky_with_jitter(np.eye(3), sigma2=1.0)
        assert chol.jitter_used == MINIMAL_JITTER
        assert chol.attempts == 1

    def test_singular_matrix_escalates_to_ladder(self):
        # At sigma2 = 1e10 the absolute minimal jitter is absorbed by
        # round-off, so the first relative level 1e-6 * sigma2 must kick in.
        sigma2 = 1e10
        K = sigma2 * np.ones((2, 2))
        chol = cholesky_with_jitter(K, sigma2=sigma2)
        assert chol.jitter_used == pytest.approx(1e-6 * sigma2, rel=1e-6)
        assert chol.attempts > 1
        resid = np.max(np.abs(chol.L @ chol.L.T - (K + chol.jitter_used * np.eye(2))))
        assert resid < 1e-12 * sigma2

    def test_singular_matrix_unit_scale(self):
        K = np.ones((2, 2))
        chol = cholesky_with_jitter(K, sigma2=1.0)
        resid = np.max(np.abs(chol.L @ chol.L.T - (K + chol.jitter_used * np.eye(2))))
        assert resid < 1e-12

    def test_indefinite_matrix_fails_when_ladder_capped(self):
        K = np.diag([1.0, -1.0])
        with pytest.raises(AllJitterFailed):
            cholesky_with_jitter(K, sigma2=1.0, ladder=(1e-6, 1e-4, 1e-1))

    def test_factorization_residual_invariant(self):
        rng = np.random.default_rng(42)
        for n in [2, 5, 9, 17]:
            K = _random_spd(rng, n)
            chol = cholesky_with_jitter(K, sigma2=1.0)
            resid = np.linalg.norm(chol.L @ chol.L.T - (K + chol.jitter_used * np.eye(n)), "fro")
            assert resid <= 1e-12 * np.linalg.norm(K, "fro")


    def test_ladder_must_increase(self):
        with pytest.raises(ValueError):
            cholesky_with_jitter(np.eye(2), sigma2=1.0, ladder=(1e-4, 1e-6))


    def test_nan_rejected(self):
        K = np.full((2, 2), np.nan)
        with pytest.raises(AllJitterFailed):
            cholesky_with_jitter(K, sigma2=1.0)


class TestSolve:
    def test_identity(self):
        chol = cholesky_with_jitter(np.eye(4), sigma2=1.0, minimal_jitter=0.0)
        b = np.arange(4.0)
        np.testing.assert_allclose(solve(chol, b), b)

    def test_two_by_two_hand_inverse(self):
        K = np.array([[4.0, 1.0], [1.0, 3.0]])
        inv = np.array([[3.0, -1.0], [-1.0, 4.0]]) / 11.0  # adjugate over det
        chol = cholesky_with_jitter(K, sigma2=1.0, minimal_jitter=0.0)
        b = np.array([1.0, 2.0])
        np.testing.assert_allclose(solve(chol, b), inv @ b, rtol=1e-14)

    def test_matches_dense_inverse_oracle(self):
        rng = np.random.default_rng(8)
        K = _random_spd(rng, 8)
        chol = cholesky_with_jitter(K, sigma2=1.0, minimal_jitter=0.0)
        B = rng.normal(size=(8, 3))
        np.testing.assert_allclose(solve(chol, B), np.linalg.inv(K) @ B, rtol=1e-10, atol=1e-12)

    def test_residual_bound(self):
        rng = np.random.default_rng(80)
        K = _random_spd(rng, 12)
        kappa = np.linalg.cond(K)
        chol = cholesky_with_jitter(K, sigma2=1.0)
        b = rng.normal(size=12)
        x = solve(chol, b)
        resid = np.linalg.norm((K + chol.jitter_used * np.eye(12)) @ x - b) / np.linalg.norm(b)
        assert resid <= 1e-8 * kappa

    def test_shape_mismatch(self):
        chol = cholesky_with_jitter(np.eye(3), sigma2=1.0)
        with pytest.raises(ValueError):
            solve(chol, np.ones(4))


class TestLogDet:
    def test_identity_is_zero(self):
        chol = cholesky_with_jitter(np.eye(5), sigma2=1.0, minimal_jitter=0.0)
        assert log_det(chol) == 0.0

    def test_scalar(self):
        chol = cholesky_with_jitter(np.array([[4.0]]), sigma2=1.0, minimal_jitter=0.0)
        assert log_det(chol) == pytest.approx(np.log(4.0), rel=1e-15)

    def test_matches_eigenvalue_oracle(self):
        rng = np.random.default_rng(6)
        K = _random_spd(rng, 6)
        chol = cholesky_with_jitter(K, sigma2=1.0, minimal_jitter=0.0)
        lam = np.linalg.eigvalsh(K)
        assert log_det(chol) == pytest.approx(float(np.sum(np.log(lam))), rel=1e-12)


class TestConditioningReport:
    def test_scaled_identity(self):
        report = conditioning_report(np.e * np.eye(2))
        assert report.kappa == pytest.approx(1.0, rel=1e-14)
        assert report.kappa_logdet == pytest.approx(1.0, rel=1e-12)

    def test_identity_is_degenerate(self):
        with pytest.raises(DegenerateLogDet):
            conditioning_report(np.eye(4))

    def test_reciprocal_pair_is_degenerate_but_shifted_is_not(self):
        a = 3.0
        with pytest.raises(DegenerateLogDet):
            conditioning_report(np.diag([a, 1.0 / a]))
        report = conditioning_report(np.diag([a**2, a]))
        assert np.isfinite(report.kappa_logdet)

    def test_sandwich_holds_on_random_spd(self):
        rng = np.random.default_rng(77)
        for _ in range(100):
            n = int(rng.integers(2, 31))
            K = _random_spd(rng, n)
            report = conditioning_report(K)
            assert report.lower_bound <= report.kappa_logdet <= report.upper_bound
            log_sum = float(np.sum(np.log(report.eigenvalues)))
            assert report.lower_bound == report.kappa / abs(log_sum)
            assert report.upper_bound == n * report.kappa / abs(log_sum)

    def test_log_det_consistent_with_eigenvalues(self):
        rng = np.random.default_rng(15)
        K = _random_spd(rng, 10)
        report = conditioning_report(K)
        chol = cholesky_with_jitter(K, sigma2=1.0, minimal_jitter=0.0)
        assert log_det(chol) == pytest.approx(float(np.sum(np.log(report.eigenvalues))), rel=1e-10)

    def test_not_positive_definite(self):
        with pytest.raises(ValueError):
            conditioning_report(np.diag([1.0, -2.0]))

    def test_eigenvalues_sorted_descending(self):
        report = conditioning_report(np.diag([2.0, 9.0, 4.0]))
        np.testing.assert_array_equal(report.eigenvalues, [9.0, 4.0, 2.0])


class TestMeasureNumericalNoise:
    def test_exact_quadratic_has_roundoff_residuals(self):
        est = measure_numerical_noise(lambda t: 1.0 + 2.0 * t + 3.0 * t**2, 0.5, 1e-5)
        assert est.delta < 1e-14

    def test_synthetic_noise_level_recovered(self):
        rng = np.random.default_rng(1234)
        noise = {}

        def f(t):
            if t not in noise:
                noise[t] = rng.uniform(-1e-7, 1e-7)
            return 1.0 + 0.1 * t + t**2 + noise[t]

        est = measure_numerical_noise(f, 0.0, 1e-5, num_points=100)
        # uniform(+-1e-7) has std 1e-7/sqrt(3) ~ 5.8e-8
        assert 1e-8 <= est.delta <= 1e-7

    def test_nonfinite_value_propagates(self):
        with pytest.raises(ValueError):
            measure_numerical_noise(lambda t: np.inf if t > 0 else 1.0, 0.0, 1.0)

    def test_zero_mean_rejected(self):
        with pytest.raises(ValueError):
            measure_numerical_noise(lambda t: 0.0, 0.0, 1.0)

    def test_num_points_precondition(self):
        with pytest.raises(ValueError):
            measure_numerical_noise(lambda t: t, 0.0, 1.0, num_points=5)

    def test_labels_carried(self):
        est = measure_numerical_noise(lambda t: t**2 + 1, 1.0, 1e-3, transect="log_rho_1", quantity="log_det")
        assert est.transect == "log_rho_1"
        assert est.quantity == "log_det"

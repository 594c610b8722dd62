"""Posterior prediction, interpolation metrics, and leave-one-out refits."""

import numpy as np
import pytest

from gpmle.errors import ConstantData
from gpmle.kernels import (
    MATERN,
    SQUARED_EXPONENTIAL,
    Dataset,
    KernelSpec,
    ParamVector,
    correlation,
    covariance_matrix,
    cross_covariance,
    scaled_distance,
)
from gpmle.optimize import InitStrategy, RestartPolicy, SchemeConfig, SOFT
from gpmle.predict import (
    ermspe,
    fit_gp,
    loo_mse,
    loo_refit,
    normalized_interp_error,
    posterior_covariance,
    posterior_mean,
)


@pytest.fixture
def small_model():
    rng = np.random.default_rng(3)
    X = np.sort(rng.uniform(0, 5, 4)).reshape(-1, 1)
    z = np.sin(X[:, 0])
    spec = KernelSpec(MATERN, 1, nu=2.5)
    params = ParamVector(sigma2=1.5, rho=[1.2], noise_var=0.0, mu=0.2)
    return spec, params, Dataset(X=X, z=z)


class TestPosteriorMean:
    def test_interpolates_training_points(self, small_model):
        spec, params, data = small_model
        model = fit_gp(spec, params, data)
        pred = posterior_mean(model, data.X)
        np.testing.assert_allclose(pred, data.z, rtol=1e-8, atol=1e-8)

    def test_reverts_to_prior_mean_far_away(self, small_model):
        spec, params, data = small_model
        model = fit_gp(spec, params, data)
        assert posterior_mean(model, np.array([1e5])) == pytest.approx(params.mu, abs=1e-12)

    def test_matches_explicit_inverse_oracle(self):
        rng = np.random.default_rng(5)
        X = np.array([[0.0], [1.0], [2.5]])
        z = rng.normal(size=3)
        data = Dataset(X=X, z=z)
        spec = KernelSpec(SQUARED_EXPONENTIAL, 1)
        params = ParamVector(sigma2=2.0, rho=[1.3], noise_var=0.1, mu=-0.4)
        model = fit_gp(spec, params, data, minimal_jitter=0.0)
        K = covariance_matrix(spec, params, X)
        x = np.array([0.7])
        k = cross_covariance(spec, params, X, x)
        oracle = params.mu + k @ np.linalg.inv(K) @ (z - params.mu)
        assert posterior_mean(model, x) == pytest.approx(oracle, rel=1e-12)


class TestPosteriorCovariance:
    def test_zero_at_training_point(self, small_model):
        spec, params, data = small_model
        model = fit_gp(spec, params, data)
        x = data.X[1]
        assert abs(posterior_covariance(model, x, x)) <= 1e-8 * params.sigma2

    def test_prior_covariance_far_from_data(self, small_model):
        spec, params, data = small_model
        model = fit_gp(spec, params, data)
        x = np.array([2e5])
        y = np.array([2e5 + 0.5])
        h = scaled_distance(x, y, params.rho)
        prior = params.sigma2 * correlation(spec, h)
        assert posterior_covariance(model, x, y) == pytest.approx(prior, rel=1e-12)

    def test_matches_explicit_inverse_oracle(self):
        rng = np.random.default_rng(12)
        X = rng.uniform(0, 4, (4, 1))
        z = rng.normal(size=4)
        data = Dataset(X=X, z=z)
        spec = KernelSpec(MATERN, 1, nu=2.5)
        params = ParamVector(sigma2=1.2, rho=[0.9], noise_var=0.05, mu=0.0)
        model = fit_gp(spec, params, data, minimal_jitter=0.0)
        K_inv = np.linalg.inv(covariance_matrix(spec, params, X))
        x, y = np.array([1.1]), np.array([2.7])
        kx = cross_covariance(spec, params, X, x)
        ky = cross_covariance(spec, params, X, y)
        prior = params.sigma2 * correlation(spec, scaled_distance(x, y, params.rho))
        assert posterior_covariance(model, x, y) == pytest.approx(prior - ky @ K_inv @ kx, rel=1e-11)

    def test_symmetry_and_variance_reduction(self, small_model):
        spec, params, data = small_model
        model = fit_gp(spec, params, data)
        rng = np.random.default_rng(7)
        for _ in range(20):
            x = rng.uniform(-1, 6, 1)
            y = rng.uniform(-1, 6, 1)
            cxy = posterior_covariance(model, x, y)
            cyx = posterior_covariance(model, y, x)
            assert cxy == pytest.approx(cyx, rel=1e-12, abs=1e-15)
            var = posterior_covariance(model, x, x)
            assert var >= 0.0
            assert var <= params.sigma2 + 1e-8 * params.sigma2


class TestMetrics:
    def test_ermspe_zero_on_training_set(self, small_model):
        spec, params, data = small_model
        model = fit_gp(spec, params, data)
        assert ermspe(model, data.X, data.z) <= 1e-8

    def test_ermspe_zero_for_constant_model(self):
        X = np.arange(5.0).reshape(-1, 1)
        data = Dataset(X=X, z=np.full(5, 3.3))
        spec = KernelSpec(SQUARED_EXPONENTIAL, 1)
        model = fit_gp(spec, ParamVector(1.0, [1.0], 0.0, mu=3.3), data)
        test_X = np.linspace(0, 4, 11).reshape(-1, 1)
        assert ermspe(model, test_X, np.full(11, 3.3)) == pytest.approx(0.0, abs=1e-9)

    def test_normalized_interp_error_small_when_interpolating(self, small_model):
        spec, params, data = small_model
        model = fit_gp(spec, params, data, minimal_jitter=0.0)
        assert normalized_interp_error(model) <= 1e-8
        # with the default jitter floor the invariant scale is 1e-6 * std(z)
        assert normalized_interp_error(fit_gp(spec, params, data)) <= 1e-6

    def test_constant_data_rejected(self):
        X = np.arange(3.0).reshape(-1, 1)
        data = Dataset(X=X, z=np.ones(3))
        spec = KernelSpec(SQUARED_EXPONENTIAL, 1)
        model = fit_gp(spec, ParamVector(1.0, [1.0], 0.0, 1.0), data)
        with pytest.raises(ConstantData):
            normalized_interp_error(model)


class TestLooRefit:
    def _scheme(self, seed=0):
        return SchemeConfig(
            init=InitStrategy.grid(grid_size=3),
            reparam="log",
            stopping=SOFT,
            restart=RestartPolicy.none(),
            seed=seed,
        )

    def test_linear_function_smoke(self):
        X = np.array([[0.0], [1.0], [2.0]])
        data = Dataset(X=X, z=2.0 * X[:, 0] + 1.0)
        spec = KernelSpec(MATERN, 1, nu=2.5)
        records = loo_refit(self._scheme(), spec, data)
        assert len(records) == 3
        assert [r.index for r in records] == [0, 1, 2]
        for r in records:
            assert r.error is None
            assert np.isfinite(r.nll)
            assert np.isfinite(r.squared_error)
            assert r.params is not None
        assert np.isfinite(loo_mse(records))

    def test_minimum_size(self):
        data = Dataset(X=[[0.0], [1.0]], z=[0.0, 1.0])
        spec = KernelSpec(MATERN, 1, nu=2.5)
        with pytest.raises(ValueError):
            loo_refit(self._scheme(), spec, data)

"""Posterior prediction, interpolation-quality metrics, and leave-one-out
refitting.

A fitted model caches the jittered Cholesky factor of the training covariance
and the weight vector alpha = K^-1 (z - mu 1); predictions are then O(n) per
point for the mean and O(n^2) for the covariance.
"""

import hashlib
import threading
from dataclasses import dataclass, replace

import numpy as np

from . import linalg
from .errors import ConstantData, GpError
from .kernels import correlation, covariance_matrix, cross_covariance, scaled_distance

_clamp_lock = threading.Lock()
_clamp_tally = 0


def negative_variance_clamps():
    """Number of negative predicted variances clamped to zero so far."""
    return _clamp_tally


def _count_clamp():
    global _clamp_tally
    with _clamp_lock:
        _clamp_tally += 1


@dataclass(frozen=True)
class FittedGP:
    """A GP conditioned on a dataset at fixed hyperparameters."""

    spec: object
    params: object
    data: object
    chol: linalg.JitteredCholesky
    alpha: np.ndarray


def fit_gp(spec, params, data, ladder=linalg.DEFAULT_LADDER, minimal_jitter=linalg.MINIMAL_JITTER):
    """Condition a GP with the given hyperparameters on the dataset."""
    K = covariance_matrix(spec, params, data.X)
    chol = linalg.cholesky_with_jitter(K, params.sigma2, ladder=ladder, minimal_jitter=minimal_jitter)
    alpha = linalg.solve(chol, data.z - params.mu)
    return FittedGP(spec=spec, params=params, data=data, chol=chol, alpha=alpha)


def posterior_mean(model, x):
    """Posterior mean mu + k(x_n, x)' alpha at one point (1-D x) or many (2-D x)."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        k = cross_covariance(model.spec, model.params, model.data.X, x)
        return model.params.mu + float(k @ model.alpha)
    return np.array([posterior_mean(model, row) for row in x])


def posterior_covariance(model, x, y):
    """Posterior covariance k(x,y) - k(x_n,y)' K^-1 k(x_n,x).

    For x == y (a predicted variance) values that round off slightly negative
    are clamped to zero and counted in a module-level tally.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    kx = cross_covariance(model.spec, model.params, model.data.X, x)
    same = np.array_equal(x, y)
    ky = kx if same else cross_covariance(model.spec, model.params, model.data.X, y)
    h = scaled_distance(x, y, model.params.rho)
    prior = model.params.sigma2 * correlation(model.spec, h)
    value = prior - float(ky @ linalg.solve(model.chol, kx))
    if same and value < 0.0:
        _count_clamp()
        return 0.0
    return value


def ermspe(model, test_X, test_z):
    """Empirical root mean squared prediction error on a test set."""
    test_X = np.atleast_2d(np.asarray(test_X, dtype=float))
    test_z = np.asarray(test_z, dtype=float)
    pred = posterior_mean(model, test_X)
    return float(np.sqrt(np.mean((test_z - pred) ** 2)))


def normalized_interp_error(model):
    """sqrt(SSR/SST): RMS training residual over the observation std."""
    z = model.data.z
    if z.shape[0] < 2:
        raise ValueError("need at least two observations")
    sd = float(np.std(z))
    if sd == 0.0:
        raise ConstantData("observations are constant; normalized error undefined")
    pred = posterior_mean(model, model.data.X)
    return float(np.sqrt(np.mean((z - pred) ** 2)) / sd)


@dataclass(frozen=True)
class LooRecord:
    """One leave-one-out fold: held-out index, refit NLL, squared prediction
    error at the held-out point, estimated parameters (None on failure)."""

    index: int
    nll: float
    squared_error: float
    params: object
    error: str = None


def loo_refit(scheme, spec, data):
    """Re-run the full estimation scheme with each point left out in turn.

    Optimizer failures are recorded per fold and do not abort the sweep.
    Returns one record per training point, in index order.
    """
    from .optimize import fit  # deferred: optimize sits above this module

    from .kernels import Dataset

    if data.n < 3:
        raise ValueError("leave-one-out needs at least three points")
    records = []
    for i in range(data.n):
        mask = np.arange(data.n) != i
        fold = Dataset(X=data.X[mask], z=data.z[mask], meta=data.meta)
        digest = hashlib.sha256(f"loo|{scheme.seed}|{i}".encode()).digest()
        fold_scheme = replace(scheme, seed=int.from_bytes(digest[:8], "big") >> 1)
        try:
            result = fit(fold_scheme, spec, fold)
            model = fit_gp(spec, result.params, fold)
            pred = posterior_mean(model, data.X[i])
            records.append(
                LooRecord(
                    index=i,
                    nll=result.nll,
                    squared_error=float((data.z[i] - pred) ** 2),
                    params=result.params,
                )
            )
        except GpError as exc:
            records.append(
                LooRecord(index=i, nll=float("nan"), squared_error=float("nan"), params=None, error=str(exc))
            )
    return records


def loo_mse(records):
    """Mean squared leave-one-out prediction error over successful folds."""
    errs = [r.squared_error for r in records if r.error is None]
    if not errs:
        raise GpError("every leave-one-out fold failed")
    return float(np.mean(errs))

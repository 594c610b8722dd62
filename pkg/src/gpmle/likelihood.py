"""Negative log-likelihood, its analytic gradient, GLS profiling of the mean
and variance, and the reparameterization layer for positive hyperparameters.

The NLL of observations z under the GP prior is

    0.5 * (z - mu 1)' K^-1 (z - mu 1) + 0.5 * log|K| + (n/2) * log(2 pi),

with the additive constant always included so values are comparable across
engines.  Both terms reuse a single jittered Cholesky factorization.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import linalg
from .errors import DegenerateProfile, NonPositiveParam
from .kernels import ParamVector, covariance_gradient, covariance_matrix

LOG = "log"
INVSOFTPLUS = "invsoftplus"

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class Reparam:
    """Componentwise monotone map of positive parameters to the real line.

    ``log`` maps theta -> log(theta).  ``invsoftplus`` maps
    theta -> log(exp(theta / s) - 1) with positive scales s (inverse is
    s * log(exp(theta') + 1)); both directions use overflow-safe forms.
    """

    kind: str
    scales: np.ndarray = None

    def __post_init__(self):
        if self.kind not in (LOG, INVSOFTPLUS):
            raise ValueError(f"unknown reparameterization: {self.kind!r}")
        if self.kind == INVSOFTPLUS:
            s = np.atleast_1d(np.asarray(self.scales if self.scales is not None else 1.0, dtype=float))
            if not np.all(s > 0):
                raise NonPositiveParam("invsoftplus scales must be positive")
            s.setflags(write=False)
            object.__setattr__(self, "scales", s)
        else:
            object.__setattr__(self, "scales", None)

    @classmethod
    def log(cls):
        return cls(kind=LOG)

    @classmethod
    def invsoftplus(cls, scales=1.0):
        return cls(kind=INVSOFTPLUS, scales=scales)


def reparam_forward(reparam, theta):
    """Map positive parameters into the unconstrained optimization space."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if not np.all(theta > 0):
        raise NonPositiveParam(f"parameters must be strictly positive, got {theta}")
    if reparam.kind == LOG:
        return np.log(theta)
    x = theta / reparam.scales
    # log(exp(x) - 1): exact small-x branch, overflow-safe large-x branch
    with np.errstate(over="ignore"):
        out = np.where(x < 1.0, np.log(np.expm1(np.minimum(x, 1.0))), x + np.log1p(-np.exp(-x)))
    return out


def reparam_backward(reparam, thetap):
    """Inverse of :func:`reparam_forward`."""
    thetap = np.atleast_1d(np.asarray(thetap, dtype=float))
    if reparam.kind == LOG:
        return np.exp(thetap)
    softplus = np.maximum(thetap, 0.0) + np.log1p(np.exp(-np.abs(thetap)))
    return reparam.scales * softplus


def reparam_dtheta(reparam, thetap):
    """d theta / d theta' evaluated at transformed coordinates."""
    thetap = np.atleast_1d(np.asarray(thetap, dtype=float))
    if reparam.kind == LOG:
        return np.exp(thetap)
    with np.errstate(over="ignore"):
        sig = 1.0 / (1.0 + np.exp(-thetap))
    return reparam.scales * sig


@dataclass(frozen=True)
class NllValueGrad:
    value: float
    grad: np.ndarray


def _factor(spec, params, data, ladder, minimal_jitter):
    K = covariance_matrix(spec, params, data.X)
    return linalg.cholesky_with_jitter(K, params.sigma2, ladder=ladder, minimal_jitter=minimal_jitter)


def _nll_from_factor(chol, resid):
    a = linalg.solve(chol, resid)
    n = resid.shape[0]
    value = 0.5 * float(resid @ a) + 0.5 * linalg.log_det(chol) + 0.5 * n * _LOG_2PI
    return value, a


def nll(spec, params, data, ladder=linalg.DEFAULT_LADDER, minimal_jitter=linalg.MINIMAL_JITTER):
    """Negative log-likelihood of the data under (spec, params)."""
    chol = _factor(spec, params, data, ladder, minimal_jitter)
    resid = data.z - params.mu
    value, _ = _nll_from_factor(chol, resid)
    return value


def nll_grad(
    spec,
    params,
    data,
    reparam,
    include_noise=False,
    ladder=linalg.DEFAULT_LADDER,
    minimal_jitter=linalg.MINIMAL_JITTER,
):
    """NLL value and gradient over (theta', mu).

    theta' are the transformed coordinates of (sigma2, rho_1..rho_d) and,
    when ``include_noise`` is set, noise_var; mu stays untransformed and is
    the last gradient entry.  Jitter is treated as a fixed diagonal constant.
    """
    chol = _factor(spec, params, data, ladder, minimal_jitter)
    resid = data.z - params.mu
    value, a = _nll_from_factor(chol, resid)

    n = data.n
    K_inv = linalg.solve(chol, np.eye(n))
    grads = covariance_gradient(spec, params, data.X)
    if not include_noise:
        grads = grads[:-1]
    nat = np.array([0.5 * np.sum(K_inv * dK) - 0.5 * float(a @ dK @ a) for dK in grads])

    theta = np.concatenate(([params.sigma2], params.rho, [params.noise_var] if include_noise else []))
    thetap = reparam_forward(reparam, theta)
    grad = np.append(nat * reparam_dtheta(reparam, thetap), -float(np.sum(a)))
    return NllValueGrad(value=value, grad=grad)


def profile_mean_var(
    spec,
    rho,
    alpha,
    data,
    ladder=linalg.DEFAULT_LADDER,
    minimal_jitter=linalg.MINIMAL_JITTER,
):
    """Generalized-least-squares optimal (mu, sigma2) for fixed ranges.

    Solves with the unit-variance matrix K~ = R(rho) + alpha * I:

        mu     = (1' K~^-1 1)^-1 1' K~^-1 z
        sigma2 = (1/n) (z - mu 1)' K~^-1 (z - mu 1)

    Raises DegenerateProfile when sigma2 comes out non-positive or non-finite
    (constant data is the typical cause).
    """
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    tilde = ParamVector(sigma2=1.0, rho=rho, noise_var=float(alpha), mu=0.0)
    chol = _factor(spec, tilde, data, ladder, minimal_jitter)
    ones = np.ones(data.n)
    u = linalg.solve(chol, ones)
    with np.errstate(over="ignore", invalid="ignore"):
        mu = float(u @ data.z) / float(u @ ones)
    if not np.isfinite(mu):
        raise DegenerateProfile(f"profiled mean is non-finite: {mu}")
    with np.errstate(over="ignore", invalid="ignore"):
        resid = data.z - mu
        sigma2 = float(resid @ linalg.solve(chol, resid)) / data.n
    if not np.isfinite(sigma2) or sigma2 <= 0.0:
        raise DegenerateProfile(f"profiled variance is degenerate: {sigma2}")
    return mu, sigma2

"""Stationary covariance kernels with anisotropic range parameters.

Covariances have the form k(x, y) = sigma2 * r(h), where h is the scaled
Euclidean distance sqrt(sum_k (x_k - y_k)^2 / rho_k^2) and r is the family's
correlation function (squared exponential, rational quadratic, Matern).
A noise variance adds to the diagonal of the training covariance matrix.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .errors import NonPositiveParam

SQUARED_EXPONENTIAL = "squared_exponential"
RATIONAL_QUADRATIC = "rational_quadratic"
MATERN = "matern"
FAMILIES = (SQUARED_EXPONENTIAL, RATIONAL_QUADRATIC, MATERN)

_SQRT5 = math.sqrt(5.0)


def _readonly(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class KernelSpec:
    """A kernel family together with the input dimension.

    ``nu`` is the regularity parameter of the rational quadratic and Matern
    families; it defaults to 1 for rational quadratic and must be given for
    Matern.  The Matern nu = 5/2 case uses an exact polynomial-times-
    exponential closed form; other nu values go through the Bessel formula.
    """

    family: str
    dim: int
    nu: float = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown kernel family: {self.family!r}")
        if self.dim < 1:
            raise ValueError("dimension must be >= 1")
        if self.family == RATIONAL_QUADRATIC and self.nu is None:
            object.__setattr__(self, "nu", 1.0)
        if self.family == MATERN and self.nu is None:
            raise ValueError("Matern kernel requires nu")
        if self.nu is not None and not self.nu > 0:
            raise NonPositiveParam(f"nu must be positive, got {self.nu}")


@dataclass(frozen=True, eq=False)
class ParamVector:
    """Hyperparameters: process variance, per-coordinate ranges, noise, mean."""

    sigma2: float
    rho: np.ndarray
    noise_var: float = 0.0
    mu: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "rho", _readonly(np.atleast_1d(self.rho)))
        if not self.sigma2 > 0:
            raise NonPositiveParam(f"sigma2 must be positive, got {self.sigma2}")
        if not np.all(self.rho > 0):
            raise NonPositiveParam(f"all ranges must be positive, got {self.rho}")
        if self.noise_var < 0:
            raise NonPositiveParam(f"noise_var must be >= 0, got {self.noise_var}")

    def __eq__(self, other):
        if not isinstance(other, ParamVector):
            return NotImplemented
        return (
            self.sigma2 == other.sigma2
            and self.noise_var == other.noise_var
            and self.mu == other.mu
            and np.array_equal(self.rho, other.rho)
        )

    @property
    def dim(self):
        return self.rho.shape[0]


@dataclass(frozen=True)
class Dataset:
    """Design points X (n x d), observations z (n), optional provenance meta.

    Duplicate rows in X make the noise-free covariance matrix exactly
    singular; callers intending interpolation should avoid them.
    """

    X: np.ndarray
    z: np.ndarray
    meta: dict = field(default=None, compare=False)

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        z = np.atleast_1d(np.asarray(self.z, dtype=float))
        if X.shape[0] != z.shape[0]:
            raise ValueError(f"X has {X.shape[0]} rows but z has {z.shape[0]} entries")
        if X.shape[0] < 1:
            raise ValueError("dataset needs at least one point")
        object.__setattr__(self, "X", _readonly(X))
        object.__setattr__(self, "z", _readonly(z))

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def dim(self):
        return self.X.shape[1]


def scaled_distance(x, y, rho):
    """Anisotropic scaled distance h = sqrt(sum_k (x_k - y_k)^2 / rho_k^2).

    Symmetric in (x, y), zero exactly when x == y.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    rho = np.asarray(rho, dtype=float)
    if x.shape != y.shape or x.shape != rho.shape:
        raise ValueError(
            f"dimension mismatch: x {x.shape}, y {y.shape}, rho {rho.shape}"
        )
    if not np.all(rho > 0):
        raise NonPositiveParam("ranges must be positive")
    u = (x - y) / rho
    return float(np.sqrt(np.dot(u, u)))


def _scaled_sqdiffs(X, Y, rho):
    # (n, m, d) array of (x_ik - y_jk)^2 / rho_k^2
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    diff = X[:, None, :] - Y[None, :, :]
    return (diff / rho) ** 2


def _distance_matrix(X, Y, rho):
    return np.sqrt(np.sum(_scaled_sqdiffs(X, Y, rho), axis=2))


def matern_bessel(nu, h):
    """General Matern correlation 2^(1-nu)/Gamma(nu) * (sqrt(2 nu) h)^nu * K_nu.

    Reference path used to cross-check the nu = 5/2 closed form.
    """
    h = np.asarray(h, dtype=float)
    u = math.sqrt(2.0 * nu) * h
    # The u -> 0 limit is 1; below 1e-10 the deficit is under double round-off.
    small = u < 1e-10
    safe = np.where(small, 1.0, u)
    with np.errstate(invalid="ignore", over="ignore"):
        val = (
            (2.0 ** (1.0 - nu) / special.gamma(nu))
            * safe**nu
            * special.kv(nu, safe)
        )
    out = np.where(small, 1.0, val)
    out = np.where(np.isnan(out), 0.0, out)  # kv underflow at large u
    if out.ndim == 0:
        return float(out)
    return out


def correlation(spec, h):
    """Correlation r(h) of the given family; r(0) = 1, non-increasing in h."""
    h = np.asarray(h, dtype=float)
    if np.any(h < 0):
        raise ValueError("h must be non-negative")
    if spec.family == SQUARED_EXPONENTIAL:
        r = np.exp(-0.5 * h**2)
    elif spec.family == RATIONAL_QUADRATIC:
        r = (1.0 + h**2) ** (-spec.nu)
    elif spec.family == MATERN and spec.nu == 2.5:
        r = (1.0 + _SQRT5 * h + (5.0 / 3.0) * h**2) * np.exp(-_SQRT5 * h)
    else:
        r = matern_bessel(spec.nu, h)
    if np.ndim(r) == 0:
        return float(r)
    return r


def covariance_matrix(spec, params, X):
    """Training covariance K = sigma2 * R + noise_var * I over the rows of X."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    H = _distance_matrix(X, X, params.rho)
    K = params.sigma2 * correlation(spec, H)
    if params.noise_var:
        K = K + params.noise_var * np.eye(X.shape[0])
    return K


def cross_covariance(spec, params, X, x):
    """Covariance vector between the rows of X and a single point x (no noise term)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    x = np.asarray(x, dtype=float).reshape(1, -1)
    H = _distance_matrix(X, x, params.rho)[:, 0]
    return params.sigma2 * correlation(spec, H)


def _range_gradient_factor(spec, H):
    # G(h) such that dr/drho_k = G(h) * (x_k - y_k)^2 / rho_k^3.
    if spec.family == SQUARED_EXPONENTIAL:
        return np.exp(-0.5 * H**2)
    if spec.family == RATIONAL_QUADRATIC:
        return 2.0 * spec.nu * (1.0 + H**2) ** (-spec.nu - 1.0)
    if spec.family == MATERN and spec.nu == 2.5:
        return (5.0 / 3.0) * (1.0 + _SQRT5 * H) * np.exp(-_SQRT5 * H)
    # General Matern: -r'(h)/h via d/du [u^nu K_nu(u)] = -u^nu K_(nu-1)(u).
    nu = spec.nu
    c = 2.0 ** (1.0 - nu) / special.gamma(nu)
    s = math.sqrt(2.0 * nu)
    u = s * H
    positive = u > 0
    safe = np.where(positive, u, 1.0)
    with np.errstate(invalid="ignore", over="ignore"):
        g = s * c * safe**nu * special.kv(nu - 1.0, safe) / np.where(positive, H, 1.0)
    g = np.where(positive, g, 0.0)
    return np.where(np.isnan(g), 0.0, g)


def covariance_gradient(spec, params, X):
    """Derivatives of the covariance matrix w.r.t. (sigma2, rho_1..rho_d, noise_var).

    Returns a list of symmetric n x n matrices in that order.  The range
    gradient on the diagonal (h = 0) is the limit value 0.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n, d = X.shape
    sq = _scaled_sqdiffs(X, X, params.rho)  # (n, n, d), already / rho^2
    H = np.sqrt(np.sum(sq, axis=2))
    grads = [correlation(spec, H)]
    G = params.sigma2 * _range_gradient_factor(spec, H)
    for k in range(d):
        # sq[..., k] = delta_k^2 / rho_k^2, so one extra 1/rho_k gives /rho_k^3
        grads.append(G * sq[:, :, k] / params.rho[k])
    grads.append(np.eye(n))
    return grads

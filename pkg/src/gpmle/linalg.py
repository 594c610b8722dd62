"""Cholesky factorization with an adaptive jitter ladder, plus conditioning
and numerical-noise diagnostics.

A factorization attempt succeeds only if every pivot is strictly positive and
finite.  The first attempt adds a constant minimal absolute jitter; on failure
the ladder of relative levels (multiples of sigma2) is walked in order and the
smallest level that succeeds is kept.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import AllJitterFailed, DegenerateLogDet

#: Relative jitter levels (multiples of sigma2), mirroring the case-study
#: engine's escalation range 1e-6 .. 1e2.
DEFAULT_LADDER = tuple(10.0**k for k in range(-6, 3))

#: Constant absolute jitter always added before the first attempt.
MINIMAL_JITTER = 1e-8


@dataclass(frozen=True)
class JitteredCholesky:
    """Lower-triangular factor of K + jitter_used * I.

    ``jitter_used`` is the absolute amount actually added to the diagonal and
    ``attempts`` the number of factorization attempts made.
    """

    L: np.ndarray
    jitter_used: float
    attempts: int

    @property
    def n(self):
        return self.L.shape[0]


def _try_cholesky(K):
    try:
        L = np.linalg.cholesky(K)
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(L)):
        return None
    return L


def cholesky_with_jitter(K, sigma2, ladder=DEFAULT_LADDER, minimal_jitter=MINIMAL_JITTER):
    """Factor K + jitter * I, escalating jitter along the ladder until success.

    Parameters
    ----------
    K : (n, n) symmetric array.
    sigma2 : positive scale; ladder levels are relative to it.
    ladder : increasing relative jitter levels, each multiplied by sigma2.
    minimal_jitter : absolute jitter included in every attempt.

    Raises
    ------
    AllJitterFailed
        If no ladder level produces a successful factorization.
    """
    K = np.asarray(K, dtype=float)
    ladder = tuple(ladder)
    if any(a >= b for a, b in zip(ladder, ladder[1:])):
        raise ValueError("jitter ladder must be strictly increasing")
    n = K.shape[0]
    eye = np.eye(n)
    attempts = 0
    for level in (0.0, *ladder):
        jitter = minimal_jitter + level * sigma2
        attempts += 1
        L = _try_cholesky(K + jitter * eye if jitter else K)
        if L is not None:
            return JitteredCholesky(L=L, jitter_used=jitter, attempts=attempts)
    raise AllJitterFailed(
        f"Cholesky failed at every jitter level up to {ladder[-1]:g}*sigma2",
        attempts=attempts,
    )


def solve(chol, b):
    """Solve (K + jitter * I) x = b through two triangular solves.

    No finiteness validation on b: overflowing inputs yield non-finite
    outputs for the caller to detect, instead of raising mid-solve.
    """
    b = np.asarray(b, dtype=float)
    if b.shape[0] != chol.n:
        raise ValueError(f"shape mismatch: factor is {chol.n}x{chol.n}, b has leading dim {b.shape[0]}")
    y = solve_triangular(chol.L, b, lower=True, check_finite=False)
    return solve_triangular(chol.L, y, lower=True, trans="T", check_finite=False)


def log_det(chol):
    """log |K + jitter * I| from the factor diagonal."""
    return 2.0 * float(np.sum(np.log(np.diag(chol.L))))


@dataclass(frozen=True)
class ConditioningReport:
    """Spectral conditioning diagnostics of a symmetric positive-definite matrix.

    ``kappa`` is the classical eigenvalue-ratio condition number.
    ``kappa_logdet`` is the local condition number of A -> log|A|,
    sqrt(sum 1/lambda_i^2) * sqrt(sum lambda_i^2) / |sum log lambda_i|,
    which is sandwiched between kappa / |sum log lambda_i| and
    n * kappa / |sum log lambda_i|.
    """

    eigenvalues: np.ndarray  # sorted descending
    kappa: float
    kappa_logdet: float
    lower_bound: float
    upper_bound: float


def conditioning_report(K):
    """Compute the conditioning report via a full symmetric eigendecomposition."""
    K = np.asarray(K, dtype=float)
    lam = np.linalg.eigvalsh(K)
    if lam[0] <= 0:
        raise ValueError("matrix is not numerically positive definite")
    lam = lam[::-1].copy()
    log_sum = float(np.sum(np.log(lam)))
    if abs(log_sum) < 1e-12:
        raise DegenerateLogDet(f"|sum log lambda_i| = {abs(log_sum):.3e} is degenerate")
    kappa = float(lam[0] / lam[-1])
    numer = float(np.sqrt(np.sum(1.0 / lam**2)) * np.sqrt(np.sum(lam**2)))
    kappa_logdet = numer / abs(log_sum)
    return ConditioningReport(
        eigenvalues=lam,
        kappa=kappa,
        kappa_logdet=kappa_logdet,
        lower_bound=kappa / abs(log_sum),
        upper_bound=len(lam) * kappa / abs(log_sum),
    )


@dataclass(frozen=True)
class NoiseEstimate:
    """Relative numerical-noise level measured on a 1-D transect.

    ``delta`` = std of residuals of a local quadratic fit, divided by the
    absolute mean of the sampled values.
    """

    delta: float
    transect: str
    quantity: str


def measure_numerical_noise(f, center, half_width, num_points=100, transect="", quantity="full_nll"):
    """Measure numerical noise of a scalar function on a short transect.

    Samples ``f`` at ``num_points`` equispaced points in
    [center - half_width, center + half_width], fits a quadratic by least
    squares, and reports the residual standard deviation relative to the
    mean sampled value.
    """
    if num_points < 10:
        raise ValueError("num_points must be >= 10")
    ts = np.linspace(center - half_width, center + half_width, num_points)
    ys = np.array([f(t) for t in ts], dtype=float)
    if not np.all(np.isfinite(ys)):
        raise ValueError("non-finite value encountered on the transect")
    u = (ts - center) / half_width  # scale to [-1, 1] for a well-posed fit
    coeffs = np.polynomial.polynomial.polyfit(u, ys, deg=2)
    resid = ys - np.polynomial.polynomial.polyval(u, coeffs)
    mean = float(np.mean(ys))
    if mean == 0.0:
        raise ValueError("mean of sampled values is zero; relative noise undefined")
    delta = float(np.std(resid) / abs(mean))
    return NoiseEstimate(delta=delta, transect=transect, quantity=quantity)

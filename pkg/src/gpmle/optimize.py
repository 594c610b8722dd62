"""MLE optimization stack: bound-constrained quasi-Newton core, stopping
rules, initialization strategies, and restart / multi-start orchestration.

The optimized coordinates are the transformed (sigma2, rho_1..rho_d) plus the
untransformed mean; the noise variance stays fixed at its initialization
value (zero in the interpolation setting, conditioning being handled by the
jitter ladder).
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import fmin_l_bfgs_b

from .errors import (
    AllJitterFailed,
    DegenerateDesign,
    DegenerateProfile,
    FitFailed,
    GpError,
    InitFailed,
    NonFiniteObjective,
    NonPositiveParam,
)
from .kernels import ParamVector
from .likelihood import Reparam, nll, nll_grad, profile_mean_var, reparam_backward, reparam_forward

PGTOL = "pgtol"
FACTR = "factr"
MAXITER = "maxiter"
LINE_SEARCH = "line_search_failure"

#: Perturbation scale putting ~95% of multiplicative factors 10^eta in [1/5, 5].
SIGMA_ETA_DEFAULT = math.log10(5.0) / 1.96

#: NLL decrease below which a restart counts as non-improving.
RESTART_IMPROVEMENT_TOL = 1e-9

#: Finite stand-in returned when a line-search trial point is unevaluable.
BACKTRACK_SENTINEL = 1e25


@dataclass(frozen=True)
class StoppingRule:
    """L-BFGS-B stopping thresholds.

    ``factr`` is the relative function-decrease threshold in units of machine
    epsilon; ``pgtol`` bounds the max-norm of the projected gradient.
    """

    maxiter: int = 1000
    factr: float = 1e7
    pgtol: float = 1e-5

    def __post_init__(self):
        if self.maxiter <= 0 or self.factr <= 0 or self.pgtol <= 0:
            raise ValueError("stopping thresholds must be positive")


SOFT = StoppingRule(maxiter=1000, factr=1e7, pgtol=1e-5)
STRICT = StoppingRule(maxiter=1000, factr=10.0, pgtol=1e-20)


@dataclass(frozen=True)
class InitStrategy:
    """How to pick the starting hyperparameters.

    kinds: ``constant`` (sigma2=1, rho=1, mu=0), ``moment`` (empirical
    moments), ``profiled`` (moment ranges + GLS mean/variance), ``grid``
    (profiled NLL over a log-spaced ladder of range multipliers).
    ``noise_ratio`` is the prescribed noise-to-variance ratio alpha.
    """

    kind: str
    noise_ratio: float = 0.0
    grid_size: int = 5
    scale_min: float = 1.0 / 50.0
    scale_max: float = 2.0

    @classmethod
    def constant(cls):
        return cls(kind="constant")

    @classmethod
    def moment(cls):
        return cls(kind="moment")

    @classmethod
    def profiled(cls, noise_ratio=0.0):
        return cls(kind="profiled", noise_ratio=noise_ratio)

    @classmethod
    def grid(cls, grid_size=5, scale_min=1.0 / 50.0, scale_max=2.0, noise_ratio=0.0):
        return cls(kind="grid", noise_ratio=noise_ratio, grid_size=grid_size,
                   scale_min=scale_min, scale_max=scale_max)


@dataclass(frozen=True)
class RestartPolicy:
    """none / restart / multistart with a total budget of ``n_opt`` runs.

    Restart relaunches from the incumbent with fresh optimizer memory and, by
    default, stops at the first restart that fails to improve the NLL by more
    than RESTART_IMPROVEMENT_TOL (set ``exhaust_budget`` to always spend the
    budget).  Multi-start perturbs the initial ranges by rho * 10^eta with
    eta ~ N(0, sigma_eta^2) per coordinate and re-profiles (mu, sigma2); the
    first run is unperturbed.
    """

    kind: str = "none"
    n_opt: int = 1
    sigma_eta: float = SIGMA_ETA_DEFAULT
    exhaust_budget: bool = False

    def __post_init__(self):
        if self.kind not in ("none", "restart", "multistart"):
            raise ValueError(f"unknown restart policy: {self.kind!r}")
        if self.n_opt < 1:
            raise ValueError("n_opt must be >= 1")
        if self.sigma_eta <= 0:
            raise ValueError("sigma_eta must be positive")

    @classmethod
    def none(cls):
        return cls(kind="none")

    @classmethod
    def restart(cls, n_opt, exhaust_budget=False):
        return cls(kind="restart", n_opt=n_opt, exhaust_budget=exhaust_budget)

    @classmethod
    def multistart(cls, n_opt, sigma_eta=SIGMA_ETA_DEFAULT):
        return cls(kind="multistart", n_opt=n_opt, sigma_eta=sigma_eta)


REPARAM_KINDS = ("log", "invsoftplus", "invsoftplus_std")


@dataclass(frozen=True)
class SchemeConfig:
    """A complete optimization scheme: init, reparameterization, stopping,
    restart policy, optional box bounds in transformed space, RNG seed."""

    init: InitStrategy
    reparam: str = "log"
    stopping: StoppingRule = SOFT
    restart: RestartPolicy = field(default_factory=RestartPolicy.none)
    bounds: tuple = None
    seed: int = 0

    def __post_init__(self):
        if self.reparam not in REPARAM_KINDS:
            raise ValueError(f"unknown reparameterization id: {self.reparam!r}")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


@dataclass(frozen=True)
class RunTrace:
    start: np.ndarray
    nll: float
    termination: str


@dataclass(frozen=True)
class FitResult:
    params: ParamVector
    nll: float
    n_nll_evals: int
    n_grad_evals: int
    wall_time: float
    per_run_trace: tuple
    best_run: int = 0


@dataclass(frozen=True)
class MinimizeResult:
    x: np.ndarray
    fun: float
    termination: str
    n_iterations: int
    n_evals: int


def init_moment_based(data):
    """Empirical-moment starting point: mu = mean(z), sigma2 = var(z),
    rho_k = std of input coordinate k (population conventions)."""
    if data.n < 2:
        raise ValueError("moment-based initialization needs n >= 2")
    rho = np.std(data.X, axis=0)
    if np.any(rho == 0.0):
        raise DegenerateDesign(f"constant input coordinate(s): {np.where(rho == 0.0)[0].tolist()}")
    return ParamVector(
        sigma2=float(np.var(data.z)),
        rho=rho,
        noise_var=0.0,
        mu=float(np.mean(data.z)),
    )


def init_profiled(spec, data, rho=None, noise_ratio=0.0):
    """Moment ranges (unless supplied) with GLS-profiled mean and variance;
    the noise variance is set to noise_ratio * sigma2."""
    if rho is None:
        rho = np.std(data.X, axis=0)
        if np.any(rho == 0.0):
            raise DegenerateDesign("constant input coordinate")
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    mu, sigma2 = profile_mean_var(spec, rho, noise_ratio, data)
    return ParamVector(sigma2=sigma2, rho=rho, noise_var=noise_ratio * sigma2, mu=mu)


def init_grid_search(spec, data, grid_size=5, scale_min=1.0 / 50.0, scale_max=2.0, noise_ratio=0.0):
    """Profiled initialization with a log-spaced grid search on the ranges.

    The nominal range is rho0_k = sqrt(d) * (per-coordinate span); candidates
    are scale * rho0 with scales log-spaced in [scale_min, scale_max], each
    profiled through GLS, and the lowest-NLL candidate wins.
    """
    if grid_size < 2:
        raise ValueError("grid_size must be >= 2")
    span = np.max(data.X, axis=0) - np.min(data.X, axis=0)
    if np.any(span <= 0.0):
        raise DegenerateDesign("constant input coordinate")
    rho0 = math.sqrt(data.dim) * span
    best = None
    for scale in np.geomspace(scale_min, scale_max, grid_size):
        try:
            candidate = init_profiled(spec, data, rho=scale * rho0, noise_ratio=noise_ratio)
            value = nll(spec, candidate, data)
        except (AllJitterFailed, DegenerateProfile):
            continue
        if best is None or value < best[0]:
            best = (value, candidate)
    if best is None:
        raise InitFailed("every grid candidate failed factorization or profiling")
    return best[1]


def _classify_termination(warnflag, task):
    task = str(task).upper()
    if warnflag == 1 or "ITERATIONS REACHED LIMIT" in task:
        return MAXITER
    if "PGTOL" in task:
        return PGTOL
    if "FACTR" in task:
        return FACTR
    return LINE_SEARCH


def minimize(objective, start, stopping, bounds=None):
    """Bound-constrained quasi-Newton minimization of a value+gradient callable.

    Thin wrapper over L-BFGS-B (10 correction pairs, 20 line-search trials),
    reporting which stopping rule fired.  Line-search failure is reported,
    not raised.
    """
    start = np.asarray(start, dtype=float)
    if bounds is not None:
        if len(bounds) != start.shape[0]:
            raise ValueError("bounds length must match start")
        for value, (lo, hi) in zip(start, bounds):
            if (lo is not None and value < lo) or (hi is not None and value > hi):
                raise ValueError(f"start value {value} outside box [{lo}, {hi}]")
    f0, _ = objective(start)
    if not np.isfinite(f0):
        raise NonFiniteObjective(f"objective is {f0} at the starting point")
    x, fun, info = fmin_l_bfgs_b(
        objective,
        start,
        bounds=bounds,
        m=10,
        factr=stopping.factr,
        pgtol=stopping.pgtol,
        maxiter=stopping.maxiter,
        maxfun=max(10 * stopping.maxiter, 15000),
        maxls=20,
    )
    return MinimizeResult(
        x=x,
        fun=float(fun),
        termination=_classify_termination(info["warnflag"], info["task"]),
        n_iterations=int(info["nit"]),
        n_evals=int(info["funcalls"]),
    )


def _build_reparam(kind, data):
    if kind == "log":
        return Reparam.log()
    if kind == "invsoftplus":
        return Reparam.invsoftplus(1.0)
    # input-standardization: one scale per range parameter, 1 for sigma2
    scales = np.std(data.X, axis=0)
    if np.any(scales == 0.0):
        raise DegenerateDesign("constant input coordinate; cannot standardize")
    return Reparam.invsoftplus(np.concatenate(([1.0], scales)))


def _initial_params(scheme, spec, data):
    strategy = scheme.init
    if strategy.kind == "constant":
        return ParamVector(sigma2=1.0, rho=np.ones(data.dim), noise_var=0.0, mu=0.0)
    if strategy.kind == "moment":
        return init_moment_based(data)
    if strategy.kind == "profiled":
        return init_profiled(spec, data, noise_ratio=strategy.noise_ratio)
    if strategy.kind == "grid":
        return init_grid_search(
            spec,
            data,
            grid_size=strategy.grid_size,
            scale_min=strategy.scale_min,
            scale_max=strategy.scale_max,
            noise_ratio=strategy.noise_ratio,
        )
    raise ValueError(f"unknown init strategy: {strategy.kind!r}")


def fit(scheme, spec, data):
    """Estimate hyperparameters by minimizing the NLL under the given scheme.

    Returns the best run's parameters and NLL together with evaluation
    counts, total wall time, and one trace per optimization run.  Raises
    FitFailed if every run fails.
    """
    t0 = time.perf_counter()
    reparam = _build_reparam(scheme.reparam, data)
    init = _initial_params(scheme, spec, data)
    counters = {"evals": 0}

    def make_objective(noise_var):
        state = {"first": True}

        def objective(x):
            counters["evals"] += 1
            first, state["first"] = state["first"], False
            try:
                with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                    positive = reparam_backward(reparam, x[:-1])
                    params = ParamVector(
                        sigma2=float(positive[0]), rho=positive[1:], noise_var=noise_var, mu=float(x[-1])
                    )
                    result = nll_grad(spec, params, data, reparam)
                if not np.isfinite(result.value) or not np.all(np.isfinite(result.grad)):
                    raise NonFiniteObjective(f"non-finite NLL/gradient at {x}")
                return result.value, result.grad
            except (AllJitterFailed, NonPositiveParam, NonFiniteObjective, FloatingPointError):
                # A line-search overshoot (e.g. overflowing sigma2) is not
                # fatal: report a huge value so the search backtracks.
                if first:
                    raise
                return BACKTRACK_SENTINEL, np.zeros(x.shape[0])

        return objective

    def pack(params):
        positive = np.concatenate(([params.sigma2], params.rho))
        x = np.append(reparam_forward(reparam, positive), params.mu)
        if scheme.bounds is not None:
            # project the initialization into the user's box
            for j, (lo, hi) in enumerate(scheme.bounds):
                if lo is not None:
                    x[j] = max(x[j], lo)
                if hi is not None:
                    x[j] = min(x[j], hi)
        return x

    def unpack(x, noise_var):
        positive = reparam_backward(reparam, x[:-1])
        return ParamVector(sigma2=float(positive[0]), rho=positive[1:], noise_var=noise_var, mu=float(x[-1]))

    def run_one(x_start, noise_var):
        try:
            result = minimize(make_objective(noise_var), x_start, scheme.stopping, scheme.bounds)
            return result, RunTrace(start=x_start, nll=result.fun, termination=result.termination)
        except GpError as exc:
            return None, RunTrace(start=x_start, nll=float("nan"), termination=f"failed: {exc}")

    policy = scheme.restart
    traces = []
    candidates = []  # (nll, run_index, x, noise_var)

    if policy.kind in ("none", "restart"):
        result, trace = run_one(pack(init), init.noise_var)
        traces.append(trace)
        if result is not None:
            candidates.append((result.fun, 0, result.x, init.noise_var))
        if policy.kind == "restart" and result is not None:
            incumbent = result
            for run_index in range(1, policy.n_opt):
                result, trace = run_one(incumbent.x, init.noise_var)
                traces.append(trace)
                if result is None:
                    break
                candidates.append((result.fun, run_index, result.x, init.noise_var))
                improved = incumbent.fun - result.fun > RESTART_IMPROVEMENT_TOL
                if result.fun <= incumbent.fun:
                    incumbent = result
                if not improved and not policy.exhaust_budget:
                    break
    else:  # multistart
        for run_index in range(policy.n_opt):
            if run_index == 0:
                start_params = init
            else:
                rng = np.random.default_rng([scheme.seed, run_index])
                eta = rng.normal(0.0, policy.sigma_eta, size=data.dim)
                rho = init.rho * 10.0**eta
                try:
                    start_params = init_profiled(spec, data, rho=rho, noise_ratio=scheme.init.noise_ratio)
                except (DegenerateProfile, AllJitterFailed) as exc:
                    traces.append(RunTrace(start=None, nll=float("nan"), termination=f"failed: {exc}"))
                    continue
            result, trace = run_one(pack(start_params), start_params.noise_var)
            traces.append(trace)
            if result is not None:
                candidates.append((result.fun, run_index, result.x, start_params.noise_var))

    if not candidates:
        raise FitFailed("every optimization run failed", traces=traces)
    best_nll, best_index, best_x, best_noise = min(candidates, key=lambda c: (c[0], c[1]))
    return FitResult(
        params=unpack(best_x, best_noise),
        nll=float(best_nll),
        n_nll_evals=counters["evals"],
        n_grad_evals=counters["evals"],
        wall_time=time.perf_counter() - t0,
        per_run_trace=tuple(traces),
        best_run=best_index,
    )

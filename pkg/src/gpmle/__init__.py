"""Gaussian-process interpolation with numerically hardened maximum-likelihood
hyperparameter estimation, plus a benchmark harness for comparing MLE
optimization schemes via ECDFs of NLL differences."""

from .errors import (
    AllJitterFailed,
    ConfigError,
    ConstantData,
    DegenerateDesign,
    DegenerateLogDet,
    DegenerateProfile,
    FitFailed,
    GpError,
    InitFailed,
    MissingReference,
    NonFiniteObjective,
    NonPositiveParam,
    OutOfDomain,
    PendingClosedForm,
)
from .kernels import (
    MATERN,
    RATIONAL_QUADRATIC,
    SQUARED_EXPONENTIAL,
    Dataset,
    KernelSpec,
    ParamVector,
    correlation,
    covariance_gradient,
    covariance_matrix,
    cross_covariance,
    scaled_distance,
)
from .likelihood import (
    NllValueGrad,
    Reparam,
    nll,
    nll_grad,
    profile_mean_var,
    reparam_backward,
    reparam_forward,
)
from .linalg import (
    ConditioningReport,
    JitteredCholesky,
    NoiseEstimate,
    cholesky_with_jitter,
    conditioning_report,
    log_det,
    measure_numerical_noise,
    solve,
)
from .optimize import (
    SOFT,
    STRICT,
    FitResult,
    InitStrategy,
    RestartPolicy,
    SchemeConfig,
    StoppingRule,
    fit,
    init_grid_search,
    init_moment_based,
    init_profiled,
    minimize,
)
from .predict import (
    FittedGP,
    ermspe,
    fit_gp,
    loo_mse,
    loo_refit,
    normalized_interp_error,
    posterior_covariance,
    posterior_mean,
)

__version__ = "0.1.0"

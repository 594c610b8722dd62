"""Exception hierarchy for the gpmle package."""


class GpError(Exception):
    """Base class for all gpmle errors."""


class AllJitterFailed(GpError):
    """No jitter level on the ladder produced a successful Cholesky factorization."""

    def __init__(self, message, attempts=0):
        super().__init__(message)
        self.attempts = attempts


class DegenerateLogDet(GpError):
    """The log-determinant is too close to zero for Eq-style condition numbers."""


class DegenerateProfile(GpError):
    """GLS profiling produced a non-positive or non-finite variance."""


class DegenerateDesign(GpError):
    """A design matrix has a constant input coordinate (zero dispersion)."""


class ConstantData(GpError):
    """Observations are constant where dispersion is required."""


class InitFailed(GpError):
    """Every candidate initialization point failed (e.g. factorization failures)."""


class FitFailed(GpError):
    """Every optimization run of a fit failed; carries the per-run traces."""

    def __init__(self, message, traces=()):
        super().__init__(message)
        self.traces = list(traces)


class NonPositiveParam(GpError, ValueError):
    """A strictly positive parameter was given a non-positive value."""


class NonFiniteObjective(GpError):
    """The objective is non-finite at the optimizer's starting point."""


class OutOfDomain(GpError, ValueError):
    """A point lies outside a test function's domain."""


class PendingClosedForm(GpError):
    """A registered test function whose closed form has not been transcribed yet."""


class MissingReference(GpError):
    """Result rows for the reference scheme are missing for some dataset."""


class ConfigError(GpError):
    """A benchmark configuration file is malformed (unknown keys, bad values)."""

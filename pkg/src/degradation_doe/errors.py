"""Exception hierarchy shared by all modules."""


class DesignError(ValueError):
    """Base class for every error raised by this package."""


class DomainError(DesignError):
    """A covariate lies outside its region or dimensions disagree."""


class SingularInformationError(DesignError):
    """An information or design matrix is (numerically) singular."""


class DegenerateVarianceError(DesignError):
    """A covariance matrix or variance function is not positive."""


class DegenerateQuantileError(DesignError):
    """The requested failure-time quantile is zero or infinite."""


class AmbiguousQuantileError(DesignError):
    """h(t) is not monotone on the search bracket, so the quantile is not unique."""


class InfeasibleError(DesignError):
    """The c-vector cannot be estimated from the candidate design points."""

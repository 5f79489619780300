"""Exception types raised across the package."""


class SigreError(Exception):
    """Base class for all package errors."""


class DegenerateScale(SigreError, ValueError):
    """A bandwidth or variance needed by a kernel or statistic is zero."""


class NonFinite(SigreError, FloatingPointError):
    """A kernel value, loss or feature overflowed or became NaN."""


class TooFewPoints(SigreError, ValueError):
    """An estimator needs more points than it was given."""


class RankCollapse(SigreError, ValueError):
    """No eigenvalue of a landmark Gram matrix exceeds the floor."""


class NotPositiveDefinite(SigreError, ValueError):
    """A covariance matrix failed its Cholesky factorisation."""


class ZeroAcceptance(SigreError, RuntimeError):
    """A Metropolis-Hastings chain essentially never moved."""


class AllWeightsDegenerate(SigreError, ValueError):
    """Every importance log-weight is -inf."""


class BudgetTooSmall(SigreError, ValueError):
    """The simulation budget cannot fill a single population."""


class TooFewValues(SigreError, ValueError):
    """A bootstrap needs at least two values."""

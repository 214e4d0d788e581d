"""Exception types shared across the package."""


class NonMarkovError(Exception):
    """Base class for all package errors."""


class ValidationError(NonMarkovError):
    """Input data violates a structural invariant."""


class ParseError(NonMarkovError):
    """Malformed input file."""


class EmptySubgroup(NonMarkovError):
    """No subject occupies the conditioning state set at the start time."""


class UndefinedProportion(NonMarkovError):
    """The occupation-proportion denominator is zero at the queried time."""


class ZeroRiskSet(NonMarkovError):
    """A covariance plug-in requires a positive at-risk probability."""


class NonpositiveSE(NonMarkovError):
    """A studentized interval was requested with a zero standard error."""


class TooManyFailures(NonMarkovError):
    """More than the tolerated share of bootstrap replicates failed."""


class DegenerateWeight(NonMarkovError):
    """Band weight is undefined (zero sigma for EP, or estimate at a clamp boundary)."""


class DomainError(NonMarkovError):
    """Transform evaluated outside its domain."""


class EmptySubsubgroupWarning(UserWarning):
    """Sub-subgroup used by a covariance plug-in is empty; its contribution is zero."""

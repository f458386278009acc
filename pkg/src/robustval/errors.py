"""Exception types shared across the package.

Raised conditions are programming or configuration errors; recoverable
conditions (degenerate statistics, deterministic-oracle mismatches) are
reported through flags on result objects instead.
"""


class RobustvalError(Exception):
    """Base class for all package errors."""


class InvalidParam(RobustvalError):
    """A parameter is out of its documented domain."""


class NormalizationViolation(RobustvalError):
    """Semivalue weights do not satisfy the normalization constraint."""


class CohortTooLarge(RobustvalError):
    """Exact enumeration requested beyond the supported cohort size."""


class MemberAlreadyPresent(RobustvalError):
    """Attempted to add a point that is already in the subset."""


class SamePoint(RobustvalError):
    """A pairwise operation was given i == j."""


class InvalidTau(RobustvalError):
    """Distinguishability threshold must be positive."""


class TauTooLarge(RobustvalError):
    """Requested gap cannot be realized with scores confined to [0, 1]."""


class SchemeMismatch(RobustvalError):
    """An estimator was fed a ledger drawn under the wrong sampling scheme."""


class OracleFailure(RobustvalError):
    """The utility oracle raised or returned a non-finite score."""


class NumericalDivergence(RobustvalError):
    """Training produced non-finite parameters or loss."""


class StorageFailure(RobustvalError):
    """The evaluation cache could not be read or written."""


class LengthMismatch(RobustvalError):
    """Paired vectors have different lengths."""

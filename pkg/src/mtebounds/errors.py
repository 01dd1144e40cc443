"""Exception hierarchy.

Errors fall in three families that the command line maps to exit codes:
validation problems (2), numerical failures (3) and rejection of the
maintained assumptions by the data (4).
"""


class MteBoundsError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ValidationError(MteBoundsError, ValueError):
    exit_code = 2


class ConfigurationError(ValidationError):
    """A required column or option is missing or inconsistent."""


class DataError(ValidationError):
    """A data value violates the table contract (e.g. non-binary treatment)."""


class ParameterError(ValidationError):
    """A tuning parameter is outside its admissible range."""


class SupportError(ValidationError):
    """An arm, group or integration range is empty."""


class SupportViolation(ValidationError):
    """Candidate effect values cannot be conditional probability differences."""


class PreconditionError(ValidationError):
    """A documented precondition of an analysis does not hold."""


class AlignmentError(ValidationError):
    """Objects that must share a grid do not."""


class NumericalError(MteBoundsError, ArithmeticError):
    exit_code = 3


class SingularDesignError(NumericalError):
    """Design matrix is rank deficient."""

    def __init__(self, message, column=None):
        super().__init__(message)
        self.column = column


class RankConditionError(NumericalError):
    """A denominator (propensity slope, first stage, arm difference) vanishes."""


class WeakInstrumentError(RankConditionError):
    pass


class InvertibilityError(NumericalError):
    """A propensity score is not strictly monotone where it must be inverted."""


class WeightError(NumericalError):
    """A weighting function has a zero normalizing constant."""


class DegenerateSupportError(NumericalError):
    """The identified integration range is empty."""


class NonFiniteError(NumericalError):
    """A value that must be finite is not."""


class FailureRateError(NumericalError):
    """Too many replications failed in a resampling or Monte Carlo loop."""


class RejectionError(MteBoundsError):
    """Bands intersect to the empty set: the maintained assumptions are rejected."""

    exit_code = 4

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report

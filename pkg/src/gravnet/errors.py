"""Exception hierarchy shared across the package.

The three top-level categories map onto the CLI exit codes:
ValidationError -> 2, ConvergenceError -> 3, DependencyError -> 4.
"""


class GravnetError(Exception):
    """Base class for all package errors."""


class ValidationError(GravnetError):
    """Bad inputs: schema violations, precondition breaches, malformed config."""


class SchemaError(ValidationError):
    """A required column, field, or coefficient name is missing or mismatched."""


class SingularDesignError(ValidationError):
    """Design matrix is rank deficient.

    Carries the names of the offending (collinear) columns when they can be
    identified.
    """

    def __init__(self, message, columns=None):
        super().__init__(message)
        self.columns = list(columns) if columns else []


class DegenerateComparisonError(ValidationError):
    """A model comparison is undefined (e.g. identical per-row likelihoods)."""


class PredictionOverflowError(ValidationError):
    """A linear predictor is too large to exponentiate. Names the dyad."""


class ConvergenceError(GravnetError):
    """An iterative fit failed to converge. May carry the last iterate."""

    def __init__(self, message, last_coefficients=None, trace=None):
        super().__init__(message)
        self.last_coefficients = last_coefficients
        self.trace = trace


class SeparationError(ConvergenceError):
    """Complete separation detected while fitting a binary-response model."""


class DependencyError(GravnetError):
    """A pipeline stage is missing an upstream artifact."""

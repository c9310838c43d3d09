"""Exception hierarchy shared across the toolkit.

Validation problems (bad inputs, malformed files) derive from ``ValueError``;
numeric failures (non-convergence, instability, singular systems) derive from
``NumericError`` so the CLI can map them to distinct exit codes.
"""


class ValidationError(ValueError):
    """Input violates a documented invariant or precondition."""


class MissingFieldError(ValidationError):
    """A required key is absent from an input document."""


class NumericError(ArithmeticError):
    """Base class for numerical failures."""


class ConvergenceError(NumericError):
    """Iterative solver hit its iteration cap."""


class SingularMatrixError(NumericError):
    """Linear system could not be solved (singular or rank deficient)."""


class InstabilityError(SingularMatrixError):
    """Operating point is at or beyond a parametric instability threshold."""


class UnidentifiableError(NumericError):
    """Data carry no information about the requested parameter."""

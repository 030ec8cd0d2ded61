"""Exception hierarchy and warning categories.

Each exception class carries the process exit code that the command-line
front end maps it to.
"""


class SelfSimError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ValidationError(SelfSimError, ValueError):
    """Invalid parameters or inputs (exit code 2)."""

    exit_code = 2


class GridMismatchError(ValidationError):
    """Operands live on different radial grids."""


class NumericalError(SelfSimError, ArithmeticError):
    """A numerical tolerance or convergence requirement failed (exit code 3)."""

    exit_code = 3


class ResolutionError(NumericalError):
    """A target grid does not resolve a profile (raised in strict mode)."""


class BranchLossError(NumericalError):
    """Continuation could not identify a unique eigenvalue branch."""


class MissingPrerequisiteError(SelfSimError, FileNotFoundError):
    """An upstream artifact required by a command is absent (exit code 4)."""

    exit_code = 4


class AccuracyWarning(UserWarning):
    """Emitted when an input is only marginally resolved."""

# core/errors.py
from typing import Any, Optional


class MeanFieldError(Exception):
    """Base class for every error raised by meanfieldpy."""


class ConfigurationError(MeanFieldError, ValueError):
    """
    Raised when inputs cannot describe a valid problem.

    Examples are incompatible grids, an annulus that crosses another
    singular point, or an ``h`` that is not invariant under the group.
    """


class ResolutionError(ConfigurationError):
    """Raised when a radius is too small to be resolved by the grid."""


class PreconditionError(MeanFieldError, ValueError):
    """Raised when an operation is called outside of its domain."""


class CriticalityError(PreconditionError):
    """Raised when a subcritical solver is asked to run at rho >= 8*pi*ell."""


class SingularityError(MeanFieldError, ValueError):
    """Raised when a Green function is evaluated at one of its poles."""


class ConvergenceError(MeanFieldError, RuntimeError):
    """
    Raised when an iterative method stops without meeting its tolerance.

    Args:
        message (str): Human readable description.
        state (Any, optional): The last state reached before the failure.
    """
    def __init__(self, message: str, state: Optional[Any] = None):
        super().__init__(message)
        self.state = state

"""Exception hierarchy shared by all modules.

Each class carries the process exit code the command-line driver maps it to.
"""

from __future__ import annotations


class BoseGPError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class ValidationError(BoseGPError, ValueError):
    """Malformed or inconsistent input."""

    exit_code = 2


class DomainError(ValidationError):
    """Input outside the mathematical domain of an operation."""


class PreconditionError(ValidationError):
    """A matrix or state violates a positivity/definiteness requirement."""


class ResolutionError(ValidationError):
    """The discretization cannot resolve a short-range kernel."""


class ConvergenceError(BoseGPError, RuntimeError):
    """An iterative method stopped before reaching its tolerance."""

    exit_code = 3

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class ResourceError(BoseGPError, MemoryError):
    """A basis or sector would exceed the configured size limit."""

    exit_code = 4

    def __init__(self, message: str, dimension: int | None = None):
        super().__init__(message)
        self.dimension = dimension

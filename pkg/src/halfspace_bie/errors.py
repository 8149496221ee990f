"""Exception hierarchy.

Each family maps to a CLI exit code (see ``cli.EXIT_CODES``).
"""


class HalfspaceError(Exception):
    """Base class for all package errors."""


class ConfigError(HalfspaceError, ValueError):
    """Invalid physical or numerical parameters."""


class BranchCutError(HalfspaceError, ValueError):
    """A square root argument landed on (-inf, 0]."""


class ResolutionError(HalfspaceError):
    """A panel fails the Legendre-tail resolution check."""


class QuadratureError(HalfspaceError):
    """Adaptive integration did not reach the requested tolerance."""

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


class SolverError(HalfspaceError):
    """Singular or non-finite linear system."""


class CoincidentPointError(HalfspaceError, ValueError):
    """The kernel was asked for x = y; the diagonal belongs to the quadrature."""

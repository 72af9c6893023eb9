"""Exception types shared across the package.

Everything raised deliberately by this library derives from RiskaverseError,
so callers (and the CLI exit-code mapping) can distinguish our failures from
genuine bugs.
"""


class RiskaverseError(Exception):
    """Base class for all errors raised by this package."""


class InvalidProblem(RiskaverseError):
    """A problem definition violates a construction invariant."""


class UnknownCatalogId(RiskaverseError):
    """Requested a built-in problem id that does not exist."""


class UnsupportedProblem(RiskaverseError):
    """Operation applied to a problem kind outside its domain."""


class QuadratureError(RiskaverseError):
    """Adaptive quadrature failed (non-finite integrand or budget exhausted)."""


class GridError(RiskaverseError):
    """Grid search could not be performed as requested."""


class LossError(RiskaverseError):
    """A loss construction or evaluation precondition failed."""


class SingularInformation(RiskaverseError):
    """An information matrix is singular or indefinite where it must not be."""


class ScheduleError(RiskaverseError):
    """A gain-attenuation schedule violates its invariants."""


class ConfigError(RiskaverseError):
    """Experiment configuration is missing, malformed, or inconsistent."""

"""Exception types shared across the package."""


class CavityCoolError(Exception):
    """Base class for all package-specific failures."""


class ConfigError(CavityCoolError, ValueError):
    """Invalid, unknown, or inconsistent configuration input."""


class TruncationError(CavityCoolError, ValueError):
    """Invalid Fock-space truncation."""


class ContractViolationError(CavityCoolError, ValueError):
    """Caller passed data violating a documented precondition."""


class NonUniqueSteadyStateError(CavityCoolError, RuntimeError):
    """Steady-state solve is singular or ill-conditioned."""


class NumericalSolveError(CavityCoolError, RuntimeError):
    """A linear solve failed or exceeded its residual tolerance."""


class RegressionInstabilityError(CavityCoolError, RuntimeError):
    """Regression drift matrix has a non-decaying mode."""


class CalibrationError(CavityCoolError, RuntimeError):
    """Geometry/trap calibration could not meet its targets."""


class GridMetadataError(CavityCoolError, ValueError):
    """Coefficient-grid cache metadata does not match the requested setup."""


class IntegratorDivergenceError(CavityCoolError, RuntimeError):
    """Langevin integration produced a non-finite state."""

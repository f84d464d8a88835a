"""Exception types shared across the package."""


class MaxlowError(Exception):
    """Base class for all package-specific errors."""


class ShapeError(MaxlowError):
    """Field kind / grid / array-extent mismatch."""


class GeometryError(MaxlowError):
    """Invalid domain geometry (labels, connectivity, collar placement)."""


class SingularityError(MaxlowError):
    """Kernel evaluated at its singular point."""


class NearSingularError(MaxlowError):
    """Resolvent frequency too close to an eigenvalue."""


class SeriesDivergenceError(MaxlowError):
    """Neumann series requested outside its convergence disk."""


class ConstraintError(MaxlowError):
    """Input data violates a solvability constraint."""


class ConfigError(MaxlowError):
    """Invalid experiment configuration."""

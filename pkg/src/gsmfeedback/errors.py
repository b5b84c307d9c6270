"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid or inconsistent configuration values."""


class DimensionError(ValueError):
    """Operands with incompatible shapes."""


class NumericalDomainError(ArithmeticError):
    """A numerical routine left its domain (e.g. a matrix that is not positive definite)."""


class DegenerateBeamformerError(NumericalDomainError):
    """A raw digital beamformer whose effective precoder norm is (numerically) zero."""

"""Exception types raised across the package."""


class EDGError(Exception):
    """Base class for all errors raised by edgrowth."""


class InvalidKernel(EDGError, ValueError):
    pass


class InvalidParameter(EDGError, ValueError):
    pass


class NormalizationExceeded(EDGError, ValueError):
    pass


class IndexOutOfRange(EDGError, IndexError):
    pass


class NonFiniteRHS(EDGError, ArithmeticError):
    """Right-hand side produced NaN/inf. ``trajectory`` holds the partial run."""

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


class InsufficientSampling(EDGError, ValueError):
    pass


class WrongRegime(EDGError, ValueError):
    pass


class GridMismatch(EDGError, ValueError):
    pass


class RateOverflow(EDGError, OverflowError):
    pass


class ConfigError(EDGError, ValueError):
    """Invalid scenario configuration; ``key`` names the offending dotted key."""

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key

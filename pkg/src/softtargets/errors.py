"""Exception types shared across the toolkit."""


class SoftTargetsError(Exception):
    """Base class for every error raised by this package."""


class RejectedInputError(SoftTargetsError, ValueError):
    """An input violates a documented precondition."""


class NumericalError(SoftTargetsError, RuntimeError):
    """An iterative routine hit its iteration cap before reaching tolerance.

    ``residual`` carries the offending magnitude (eigensolver off-diagonal
    residual, LASSO stationarity violation, ...).
    """

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class DegenerateReconstructionError(SoftTargetsError, ValueError):
    """A reconstruction carries no positive mass, so it cannot be normalized."""

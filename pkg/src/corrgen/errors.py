"""Exception hierarchy shared by all corrgen modules."""


class CorrgenError(Exception):
    """Base class for corrgen failures."""


class DimensionError(CorrgenError, ValueError):
    pass


class DomainError(CorrgenError, ValueError):
    pass


class NotPositiveDefinite(CorrgenError, ValueError):
    """Matrix failed a positive-definiteness check.

    ``lambda_min`` carries the offending smallest eigenvalue when known.
    """

    def __init__(self, message, lambda_min=None):
        super().__init__(message)
        self.lambda_min = lambda_min


class NumericalFailure(CorrgenError, ArithmeticError):
    pass


class IterationLimit(NumericalFailure):
    """Fixed-point iteration hit its cap; ``residual`` is the last update size."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class BoundExceeded(CorrgenError, ValueError):
    pass


class InvalidState(CorrgenError, RuntimeError):
    pass


class SamplingStarvation(CorrgenError, RuntimeError):
    pass


class ValidityStarvation(SamplingStarvation):
    def __init__(self, message, attempts=None):
        super().__init__(message)
        self.attempts = attempts

"""Exception hierarchy shared by all finslerlab modules."""


class FinslerLabError(Exception):
    """Base class for all errors raised by finslerlab."""


class DomainError(FinslerLabError, ValueError):
    """An argument lies outside the domain of the operation (zero vector, N < n, ...)."""


class StrongConvexityError(FinslerLabError):
    """The fundamental tensor is not positive definite."""


class NumericalError(FinslerLabError, ArithmeticError):
    """An iterative solve failed to converge.

    ``trace`` carries whatever per-iteration diagnostics the solver kept.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class ConfigurationError(FinslerLabError, ValueError):
    """Invalid run configuration (CFL violation, bad scenario field, ...)."""


class StabilityError(FinslerLabError):
    """A time integration lost positivity or positive definiteness."""

    def __init__(self, message, t=None, location=None):
        super().__init__(message)
        self.t = t
        self.location = location


class UnsupportedFamilyError(FinslerLabError):
    """The metric family does not support the requested operation."""


class PreconditionError(FinslerLabError):
    """A hypothesis of an estimate (bound condition, curvature bound) does not hold."""

    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition

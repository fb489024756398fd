"""Exception types raised across the package."""


class ContourIMCError(Exception):
    """Base class for all package errors."""


class DomainError(ContourIMCError, ValueError):
    pass


class MonotonicityViolation(ContourIMCError):
    """Unwrapped angle could not be kept strictly monotone (signal undersampled)."""


class EvalOutOfRange(ContourIMCError, ValueError):
    pass


class NonFiniteDerivative(ContourIMCError, ArithmeticError):
    pass


class DegenerateL(ContourIMCError):
    """The exosystem radius l(x1) vanishes on the requested range."""


class StructureViolation(ContourIMCError):
    pass


class NotObservable(ContourIMCError):
    pass


class DimensionMismatch(ContourIMCError, ValueError):
    pass


class SingularSystem(ContourIMCError):
    """The per-sample Sylvester system has no exact solution."""


class OutOfRange(ContourIMCError, ValueError):
    pass


class Infeasible(ContourIMCError):
    """LMI feasibility problem has no strictly feasible point."""

    def __init__(self, message, margin=None):
        super().__init__(message)
        self.margin = margin


class MaxIterations(ContourIMCError):
    pass


class ObserverPlacementFailure(ContourIMCError):
    pass


class SynthesisFailure(ContourIMCError):
    pass


class AssumptionFailure(ContourIMCError):
    pass


class ConfigError(ContourIMCError):
    pass

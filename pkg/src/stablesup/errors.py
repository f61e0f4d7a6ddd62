"""Exception hierarchy.

Domain errors (bad parameters) and convergence errors are kept apart so the
CLI can map them to distinct exit codes.
"""


class StableSupError(Exception):
    """Base class for all package errors."""


class DomainError(StableSupError, ValueError):
    """Inputs outside the domain where the series representation applies."""


class AdmissibilityError(DomainError):
    pass


class RationalAlpha(DomainError):
    pass


class DoneyClass(DomainError):
    pass


class NonPositiveInput(DomainError):
    pass


class InvalidQuotient(DomainError):
    pass


class GammaPole(DomainError):
    pass


class NearSingularProduct(DomainError):
    pass


class Unsupported(DomainError):
    pass


class OutOfRange(DomainError):
    pass


class LevelBudget(DomainError):
    pass


class CutoffUnderflow(DomainError):
    pass


class PrecisionExhausted(StableSupError):
    pass


class ConvergenceError(StableSupError):
    """Raised when a summation gives up; ``result`` holds the best estimate."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class ShellBudgetExhausted(ConvergenceError):
    pass

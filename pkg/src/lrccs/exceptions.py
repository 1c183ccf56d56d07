"""Exception types raised by the solvers."""


class LrccsError(Exception):
    """Base class for all package errors."""


class DimensionError(LrccsError, ValueError):
    """Problem dimensions are invalid or inconsistent."""


class InfeasibleSplitError(LrccsError, ValueError):
    """Too few measurements for the requested sample split."""


class ContractViolation(LrccsError, ValueError):
    """An input violates a documented precondition (e.g. non-orthonormal basis)."""


class InfeasibleLSError(LrccsError, ValueError):
    """Column-wise least squares is underdetermined (m < r)."""


class SingularStepError(LrccsError, ArithmeticError):
    """A gradient step destroyed the rank of the basis."""


class SolverError(LrccsError, RuntimeError):
    """An inner iterative solver failed to converge."""

    def __init__(self, msg, residual=None):
        super().__init__(msg)
        self.residual = residual

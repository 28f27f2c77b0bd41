"""Exception types raised across the package."""


class HamDelayError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(HamDelayError, ValueError):
    pass


class DomainError(HamDelayError, ValueError):
    """A mean value left the open set ``W`` or a loop hit a forbidden point."""


class PreconditionError(HamDelayError, ValueError):
    pass


class NumericalError(HamDelayError, ArithmeticError):
    pass


class IntegrationBlowupError(NumericalError):
    """Non-finite state encountered while integrating a flow."""

    def __init__(self, time, message=None):
        self.time = float(time)
        super().__init__(message or f"non-finite state at t={self.time:.6g}")


class SolverFailure(HamDelayError, RuntimeError):
    """Iteration did not converge. ``history`` holds the per-iteration trace."""

    def __init__(self, message, residual=None, history=None):
        self.residual = residual
        self.history = list(history or [])
        super().__init__(message)


class DomainExitError(SolverFailure, DomainError):
    """The self-consistent mean left ``W`` during iteration."""

"""Exception hierarchy shared by all stacktherm modules."""


class StackthermError(Exception):
    """Base class for everything this package raises deliberately."""


class DomainError(StackthermError, ValueError):
    """A physical quantity is outside the model's domain (e.g. T <= 0)."""


class ParseError(StackthermError, ValueError):
    """Malformed input text. Carries the 1-based line number when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ValidationError(StackthermError, ValueError):
    """Well-formed input that violates a semantic constraint."""


class FitError(StackthermError, RuntimeError):
    """Parameter fit could not be performed or produced a corrupt result."""


class SolverError(StackthermError, RuntimeError):
    """Linear solve failed to reach the requested residual."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class ThermalRunawayError(StackthermError, RuntimeError):
    """Coupled iteration exceeded the runaway temperature ceiling."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history or []


class NonConvergenceError(StackthermError, RuntimeError):
    """Coupled iteration exhausted max_iters. Carries the last change."""

    def __init__(self, message, last_delta=None, history=None):
        super().__init__(message)
        self.last_delta = last_delta
        self.history = history or []

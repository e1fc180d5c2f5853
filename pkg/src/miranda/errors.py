"""Exception hierarchy shared by every module of the package."""

from __future__ import annotations


class MirandaError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(MirandaError, ValueError):
    pass


class ParseError(MirandaError, ValueError):
    """Syntax or identifier error in a map expression.

    ``position`` is the 0-based character offset in the source text.
    """

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class EvaluationError(MirandaError, ArithmeticError):
    """Non-finite value or arithmetic fault while evaluating a map."""


class BoundaryConditionError(MirandaError):
    """The sign condition on opposite faces is violated (or numerically unsafe)."""

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class NotOutwardError(BoundaryConditionError):
    def __init__(self, message: str, witness=None, report=None):
        super().__init__(message, report)
        self.witness = witness


class NonSmoothMapError(MirandaError, ValueError):
    pass


class SmoothingError(MirandaError):
    pass


class TraceError(MirandaError):
    pass


class ParityViolation(MirandaError):
    """A located zero set disagrees with the parity the boundary data forces."""


class RetryCapExceeded(MirandaError):
    def __init__(self, message: str, last_certificate=None):
        super().__init__(message)
        self.last_certificate = last_certificate

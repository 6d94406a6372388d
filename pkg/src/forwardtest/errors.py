"""Exception hierarchy shared by every forwardtest module."""

from typing import Any, List, Optional


class ForwardtestError(Exception):
    """Base class for all errors raised by the package."""


class FormatError(ForwardtestError, ValueError):
    """Input text does not follow the expected wire format."""


class RowError(ForwardtestError, ValueError):
    """A single CSV row could not be parsed or violates the bar invariants."""

    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


class InvariantViolation(RowError):
    """A parsed bar breaks low <= open/close <= high."""


class EmptyPartitionError(ForwardtestError, ValueError):
    """A split would leave one side empty."""


class DegenerateError(ForwardtestError, ValueError):
    """Zero variance or zero range where a scale is required."""


class DomainError(ForwardtestError, ValueError):
    """Argument outside the mathematical domain (non-positive price, zero actual)."""


class SizeError(ForwardtestError, ValueError):
    """Input too short for the requested window, lag or order."""


class ArgumentError(ForwardtestError, ValueError):
    """Invalid or empty argument."""


class ShapeError(ForwardtestError, ValueError):
    """Array widths do not match a model geometry."""


class NumericalError(ForwardtestError, RuntimeError):
    """Singular system or other numerical breakdown."""


class ConvergenceError(ForwardtestError, RuntimeError):
    """Optimizer stopped before converging; `best` holds the best-so-far result."""

    def __init__(self, message: str, best: Any = None):
        self.best = best
        super().__init__(message)


class DivergenceError(ForwardtestError, RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch: int, message: Optional[str] = None):
        self.epoch = epoch
        super().__init__(message or f"non-finite loss at epoch {epoch}")


class AggregateError(ForwardtestError, RuntimeError):
    """Every member of a batch of fits failed."""

    def __init__(self, message: str, failures: List[Exception]):
        self.failures = list(failures)
        super().__init__(f"{message} ({len(self.failures)} failures)")


class ConfigurationError(ForwardtestError, RuntimeError):
    """Missing model component or inconsistent configuration."""


class LookAheadError(ForwardtestError, RuntimeError):
    """A forwardtest input is dated after the selection date."""


class TransportError(ForwardtestError, OSError):
    """Remote fetch failed (status, timeout, TLS)."""


class PersistenceError(ForwardtestError, OSError):
    """Model file is corrupt, truncated or of an unknown version."""

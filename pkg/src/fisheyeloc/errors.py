"""Exception hierarchy shared by every module.

Each class carries the CLI exit code it maps to, so the command line layer
never has to guess how to report a failure.
"""

from __future__ import annotations


class FisheyeLocError(Exception):
    exit_code = 1


class ValidationError(FisheyeLocError, ValueError):
    """Input violates a documented precondition or type invariant."""


class DomainError(ValidationError):
    """Argument outside the mathematical domain of an operation."""


class OutOfRangeError(ValidationError):
    """Radial distance or pixel lies outside the image circle."""

    def __init__(self, message: str, max_r: float | None = None):
        super().__init__(message)
        self.max_r = max_r


class DegenerateRadialError(ValidationError):
    """Radial direction is undefined (point sits on the principal point)."""


class CapacityError(ValidationError):
    """Fewer detector queries than ground-truth boxes."""


class ContractError(ValidationError):
    """A pluggable component broke its interface contract."""


class GenerationError(ValidationError):
    """Scene generation could not satisfy its placement constraints."""


class ParseError(ValidationError):
    """Malformed input document; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class RecordError(ParseError):
    """Well-formed record that violates a field invariant."""

    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message, line)
        self.field = field


class NumericalError(FisheyeLocError):
    exit_code = 2


class CalibrationError(NumericalError):
    def __init__(self, message: str, rms_px: float | None = None):
        super().__init__(message)
        self.rms_px = rms_px


class InsufficientCorrespondencesError(CalibrationError):
    """Too few or degenerate calibration points; a precondition failure."""

    exit_code = 1


class UnlocalizableError(NumericalError):
    """Anchor ray too close to the horizon to intersect the floor."""

"""Exceptions for pyisac."""
from typing import Optional


class IsacError(Exception):
    """Base error raised by pyisac."""


class ConfigError(IsacError, ValueError):
    """Invalid configuration value or unknown configuration key."""


class OutOfDurationError(IsacError, ValueError):
    """Requested time step lies outside the configured scenario duration."""


class DegenerateGeometryError(IsacError, ValueError):
    """Two points coincide where a direction or a distance is needed."""


class NoVisibleTargetError(IsacError):
    """No scatterer of a target survives bounding box filtering."""


class RangeAmbiguityError(IsacError, ValueError):
    """Target delay exceeds the unambiguous window of the chirp."""


class DimensionMismatchError(IsacError, ValueError):
    """Array shapes are inconsistent with each other."""


class SchemaMismatchError(IsacError, ValueError):
    """Record or codebook sizes disagree with the declared schema."""


class DegenerateIntervalError(IsacError, ValueError):
    """Interval knots of a distribution focal loss coincide."""


class ParseError(IsacError, ValueError):
    """Malformed record in a newline-delimited file."""

    def __init__(self, message: str, line_number: Optional[int] = None) -> None:
        """Initialize the error with the offending line number."""
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number

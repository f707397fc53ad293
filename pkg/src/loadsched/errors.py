"""Exception types shared across the package."""

from __future__ import annotations


class LoadschedError(Exception):
    """Base class for all errors raised by this package."""


class TelemetryParseError(LoadschedError):
    """Telemetry input is structurally unusable (bad header, malformed row,
    duplicate sample, out-of-range value).  Carries the 1-based data row
    number when one row is to blame."""

    def __init__(self, message: str, row: int | None = None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class NotEvaluableError(LoadschedError):
    """A server-day cannot be judged: slot coverage below the floor, or a
    required stretch of history has no samples at all."""


class UndefinedRatioError(LoadschedError):
    """Bucket ratio asked for two slices with no co-present slots."""


class InsufficientHistoryError(LoadschedError):
    """Forecast target needs history days the series does not cover."""

    def __init__(self, message: str, missing_days=()):
        self.missing_days = tuple(missing_days)
        super().__init__(message)


class UndefinedMetricError(LoadschedError):
    """Error-metric normalizer is zero (flat or zero-mean actuals)."""


class SchedulingError(LoadschedError):
    """A due server could not be given any backup window."""

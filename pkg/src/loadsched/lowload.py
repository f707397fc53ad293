"""Lowest-load (LL) windows, per-day prediction verdicts, and the 3-week
predictability rule.

An LL window of length b slots is the contiguous window (1-slot stride,
never crossing the UTC day boundary) minimizing the mean of the present
slot values; ties break toward the earliest start.  A predicted window is
"correct" when backing up there would have cost at most ``bound.over`` more
actual CPU than the true best window; only the over side is tested because
the true window's mean is minimal, so the gap cannot be meaningfully
negative.  A server becomes "predictable" only after three full weeks of
days that were all evaluable and all predicted correctly and accurately.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import date
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .classify import ACCURACY_THRESHOLD_PCT, ErrorBound, _ratio_or_none
from .errors import NotEvaluableError, UndefinedMetricError, UndefinedRatioError
from .telemetry import (
    DEFAULT_MIN_COVERAGE,
    SLOT_MINUTES,
    SLOTS_PER_DAY,
    DaySlice,
    coverage,
)

__all__ = [
    "Window",
    "BackupDuration",
    "PredictabilityRecord",
    "PREDICTABLE_MIN_SPAN_DAYS",
    "ll_window",
    "window_avg",
    "ll_window_correct",
    "load_accurate_in_window",
    "evaluate_server_day",
    "is_predictable",
    "mean_nrmse",
    "mase",
]

# A server must have this many days of clean record before it may be
# scheduled off its predictions.
PREDICTABLE_MIN_SPAN_DAYS = 21


@dataclass(frozen=True)
class Window:
    """A contiguous run of 5-minute slots inside one UTC day."""

    start_slot: int
    length_slots: int

    def __post_init__(self):
        if self.start_slot < 0 or self.length_slots < 1:
            raise ValueError("window needs start_slot >= 0 and length_slots >= 1")
        if self.start_slot + self.length_slots > SLOTS_PER_DAY:
            raise ValueError("window must not cross the UTC day boundary")

    @property
    def end_slot(self) -> int:
        return self.start_slot + self.length_slots

    @property
    def start_minute(self) -> int:
        return self.start_slot * SLOT_MINUTES

    @property
    def duration_min(self) -> int:
        return self.length_slots * SLOT_MINUTES

    def to_json_dict(self) -> dict:
        return {"start_minute": self.start_minute, "duration_min": self.duration_min}


@dataclass(frozen=True)
class BackupDuration:
    """Backup length in minutes; must fill whole 5-minute slots."""

    minutes: int

    def __post_init__(self):
        if not (SLOT_MINUTES <= self.minutes <= SLOTS_PER_DAY * SLOT_MINUTES):
            raise ValueError("backup duration must lie in [5, 1440] minutes")
        if self.minutes % SLOT_MINUTES != 0:
            raise ValueError("backup duration must be a multiple of 5 minutes")

    @property
    def slots(self) -> int:
        return self.minutes // SLOT_MINUTES


def ll_window(
    day: DaySlice,
    duration: BackupDuration,
    min_coverage: float = DEFAULT_MIN_COVERAGE,
) -> Window:
    """Lowest-load window of the given duration within one day.

    Candidates start at every slot (stride 1) and must fit inside the day.
    Each candidate is scored by the mean of its present values; fully
    absent candidates are skipped.  The earliest start wins ties.  Days
    below the coverage floor raise NotEvaluableError.
    """
    if coverage(day) < min_coverage:
        raise NotEvaluableError(
            f"day coverage {coverage(day):.3f} below floor {min_coverage:.3f}"
        )
    length = duration.slots
    windows = sliding_window_view(day.slots, length)
    sums = np.nansum(windows, axis=1)
    counts = np.count_nonzero(~np.isnan(windows), axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        means = np.where(counts > 0, sums / counts, np.inf)
    if not np.any(np.isfinite(means)):
        raise NotEvaluableError("every candidate window is fully absent")
    return Window(int(np.argmin(means)), length)


def window_avg(day: DaySlice, window: Window) -> float:
    """Mean of the present values inside the window; raises
    NotEvaluableError when the window holds no sample."""
    part = day.slots[window.start_slot:window.end_slot]
    count = np.count_nonzero(~np.isnan(part))
    if count == 0:
        raise NotEvaluableError("window holds no samples")
    return float(np.nansum(part) / count)


def ll_window_correct(
    predicted: DaySlice,
    actual: DaySlice,
    duration: BackupDuration,
    bound: ErrorBound = ErrorBound(),
    min_coverage: float = DEFAULT_MIN_COVERAGE,
) -> tuple[bool, Window, Window]:
    """Judge the predicted LL window against the one hindsight would pick.

    Returns (correct, predicted_window, true_window) where correct means
    the actual cost of the predicted window exceeds the actual cost of the
    true window by at most ``bound.over``.
    """
    w_pred = ll_window(predicted, duration, min_coverage)
    w_true = ll_window(actual, duration, min_coverage)
    gap = window_avg(actual, w_pred) - window_avg(actual, w_true)
    return gap <= bound.over, w_pred, w_true


def load_accurate_in_window(
    predicted: DaySlice,
    actual: DaySlice,
    window: Window,
    bound: ErrorBound = ErrorBound(),
) -> tuple[bool, float]:
    """Bucket ratio restricted to the window's slots, against the 90% bar."""
    sel = slice(window.start_slot, window.end_slot)
    ratio = _ratio_or_none(predicted.slots[sel], actual.slots[sel], bound)
    if ratio is None:
        raise UndefinedRatioError("no co-present slots inside the window")
    return ratio >= ACCURACY_THRESHOLD_PCT, ratio


@dataclass(frozen=True)
class PredictabilityRecord:
    """Outcome of one server-day: was the day judgeable at all, and if so,
    did the prediction pick a correct window and stay accurate inside it."""

    server_id: str
    day: date
    evaluable: bool
    ll_window_correct: bool | None = None
    load_accurate: bool | None = None
    predicted_window: Window | None = None
    true_window: Window | None = None
    window_gap: float | None = None
    bucket_ratio_in_window: float | None = None
    reason: str | None = None

    def to_json_dict(self) -> dict:
        return {
            "server_id": self.server_id,
            "day": self.day.isoformat(),
            "evaluable": self.evaluable,
            "ll_window_correct": self.ll_window_correct,
            "load_accurate": self.load_accurate,
            "predicted_window": self.predicted_window.to_json_dict() if self.predicted_window else None,
            "true_window": self.true_window.to_json_dict() if self.true_window else None,
            "window_gap": None if self.window_gap is None else round(self.window_gap, 6),
            "bucket_ratio_in_window": (
                None if self.bucket_ratio_in_window is None else round(self.bucket_ratio_in_window, 6)
            ),
            "reason": self.reason,
        }


def evaluate_server_day(
    predicted: DaySlice,
    actual: DaySlice,
    duration: BackupDuration,
    bound: ErrorBound = ErrorBound(),
    min_coverage: float = DEFAULT_MIN_COVERAGE,
) -> PredictabilityRecord:
    """Produce the day's PredictabilityRecord.

    The day is evaluable only when both the predicted and the actual side
    clear the coverage floor; freak cases where a window average or the
    in-window ratio is undefined (all needed slots absent) also mark the
    day not evaluable rather than guessing a verdict.
    """
    if predicted.day != actual.day or predicted.server_id != actual.server_id:
        raise ValueError("predicted and actual must describe the same server-day")
    sid, day = actual.server_id, actual.day

    cov_p, cov_a = coverage(predicted), coverage(actual)
    if cov_p < min_coverage or cov_a < min_coverage:
        side = "predicted" if cov_p < min_coverage else "actual"
        return PredictabilityRecord(
            sid, day, evaluable=False,
            reason=f"{side} coverage {min(cov_p, cov_a):.3f} below floor {min_coverage:.3f}",
        )
    try:
        w_pred = ll_window(predicted, duration, min_coverage)
        w_true = ll_window(actual, duration, min_coverage)
        gap = window_avg(actual, w_pred) - window_avg(actual, w_true)
        accurate, ratio = load_accurate_in_window(predicted, actual, w_pred, bound)
    except (NotEvaluableError, UndefinedRatioError) as exc:
        return PredictabilityRecord(sid, day, evaluable=False, reason=str(exc))
    return PredictabilityRecord(
        sid,
        day,
        evaluable=True,
        ll_window_correct=gap <= bound.over,
        load_accurate=accurate,
        predicted_window=w_pred,
        true_window=w_true,
        window_gap=gap,
        bucket_ratio_in_window=ratio,
    )


def is_predictable(records: Sequence[PredictabilityRecord]) -> bool:
    """Three-week gate for prediction-driven scheduling.

    True only when the records span at least 21 days, every day in them was
    evaluable, and every day's window was correct with accurate load.  One
    bad or unjudgeable day keeps the server on its default schedule.
    """
    if not records:
        return False
    days = [r.day for r in records]
    span = (max(days) - min(days)).days + 1
    if span < PREDICTABLE_MIN_SPAN_DAYS:
        return False
    return all(r.evaluable and r.ll_window_correct and r.load_accurate for r in records)


# ---------------------------------------------------------------------------
# Forecast error metrics
# ---------------------------------------------------------------------------

def _pair(forecast_vals, actual_vals) -> tuple[np.ndarray, np.ndarray]:
    f = np.asarray(forecast_vals, dtype=np.float64)
    a = np.asarray(actual_vals, dtype=np.float64)
    if f.shape != a.shape or f.ndim != 1 or len(f) == 0:
        raise ValueError("forecast and actual must be equal-length non-empty 1-d arrays")
    if np.any(np.isnan(f)) or np.any(np.isnan(a)):
        raise ValueError("metric inputs must not contain NaN; filter absent slots first")
    return f, a


def mean_nrmse(forecast_vals, actual_vals) -> float:
    """Root-mean-square of (forecast - actual), normalized by the mean
    actual.  Raises UndefinedMetricError when the actuals average zero."""
    f, a = _pair(forecast_vals, actual_vals)
    denom = float(np.mean(a))
    if denom == 0.0:
        raise UndefinedMetricError("mean of actuals is zero")
    err = f - a
    return float(np.sqrt(np.mean(err * err)) / denom)


def mase(forecast_vals, actual_vals) -> float:
    """Mean absolute error scaled by the mean absolute one-step change of
    the actuals (the error a walk-forward naive forecast would make).
    Raises UndefinedMetricError for constant actuals."""
    f, a = _pair(forecast_vals, actual_vals)
    if len(a) < 2:
        raise ValueError("mase needs at least two points")
    denom = float(np.mean(np.abs(np.diff(a))))
    if denom == 0.0:
        raise UndefinedMetricError("actuals never change; naive error is zero")
    return float(np.mean(np.abs(f - a)) / denom)

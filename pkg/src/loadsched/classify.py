"""Server behaviour taxonomy built on the bucket-ratio accuracy test.

A prediction for a server-day is scored by the fraction of co-present slots
whose deviation (predicted - actual) falls inside an asymmetric band: the
default tolerates over-prediction up to +10 CPU points and under-prediction
down to -5.  A day is accurately predicted when that fraction is at least
90%.  Classes are tested in a fixed precedence order:

    short-lived > stable > daily pattern > weekly pattern > no pattern

Short-lived means the server has existed for at most 21 days.  Stable means
the scalar interval mean accurately predicts every evaluable day.  Daily
means each day is accurately predicted by the day before; weekly means each
day is accurately predicted by the same weekday one week earlier AND the
daily test failed.  Anything else with enough history is no-pattern.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import date, timedelta
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import NotEvaluableError, UndefinedRatioError
from .telemetry import (
    DEFAULT_MIN_COVERAGE,
    SLOTS_PER_DAY,
    DaySlice,
    LoadSeries,
    day_matrix,
)

__all__ = [
    "ACCURACY_THRESHOLD_PCT",
    "LONG_LIVED_MIN_AGE_DAYS",
    "ErrorBound",
    "Lifespan",
    "ServerClass",
    "ClassificationResult",
    "bucket_ratio",
    "is_accurate",
    "lifespan_class",
    "span_days",
    "is_stable",
    "has_daily_pattern",
    "has_weekly_pattern",
    "classify_server",
    "classify_server_detailed",
    "stable_by_stddev",
]

# A day counts as accurately predicted when at least this percentage of its
# co-present slots deviate within the bound.
ACCURACY_THRESHOLD_PCT = 90.0

# A server is long-lived once it has existed for strictly more than 3 weeks.
LONG_LIVED_MIN_AGE_DAYS = 21


@dataclass(frozen=True)
class ErrorBound:
    """Asymmetric tolerance on (predicted - actual), inclusive both sides.

    ``over`` bounds over-prediction (deviation above actual), ``under``
    bounds under-prediction and is therefore non-positive.
    """

    over: float = 10.0
    under: float = -5.0

    def __post_init__(self):
        if not (self.over >= 0.0):
            raise ValueError("over must be >= 0")
        if not (self.under <= 0.0):
            raise ValueError("under must be <= 0")

    @classmethod
    def parse(cls, text: str) -> "ErrorBound":
        """Parse the "+10:-5" CLI form."""
        try:
            over_s, under_s = text.split(":")
            return cls(over=float(over_s), under=float(under_s))
        except (ValueError, TypeError) as exc:
            raise ValueError(f"bound must look like '+10:-5', got {text!r}") from exc

    @property
    def label(self) -> str:
        return f"+{self.over:g}:{self.under:g}"


class ServerClass(Enum):
    SHORT_LIVED = "short_lived"
    STABLE = "stable"
    DAILY_PATTERN = "daily_pattern"
    WEEKLY_PATTERN = "weekly_pattern"
    NO_PATTERN = "no_pattern"


class Lifespan(Enum):
    SHORT_LIVED = "short_lived"
    LONG_LIVED = "long_lived"


def _as_slots(value) -> np.ndarray:
    if isinstance(value, DaySlice):
        return value.slots
    arr = np.asarray(value, dtype=np.float64)
    if arr.shape != (SLOTS_PER_DAY,):
        raise ValueError(f"expected a {SLOTS_PER_DAY}-slot vector, got shape {arr.shape}")
    return arr


def _ratio_or_none(predicted: np.ndarray, actual: np.ndarray, bound: ErrorBound) -> float | None:
    both = ~np.isnan(predicted) & ~np.isnan(actual)
    n = int(np.count_nonzero(both))
    if n == 0:
        return None
    dev = predicted[both] - actual[both]
    in_band = np.count_nonzero((dev >= bound.under) & (dev <= bound.over))
    return 100.0 * in_band / n


def bucket_ratio(predicted, actual, bound: ErrorBound = ErrorBound()) -> float:
    """Percentage of co-present slots where predicted - actual lies inside
    [bound.under, bound.over].  Slots absent on either side are ignored;
    raises UndefinedRatioError when no slot is present on both sides.

    Accepts DaySlice or raw 288-slot vectors; the caller is responsible for
    aligning the two sides to the same target day.
    """
    ratio = _ratio_or_none(_as_slots(predicted), _as_slots(actual), bound)
    if ratio is None:
        raise UndefinedRatioError("no co-present slots between predicted and actual")
    return ratio


def is_accurate(predicted, actual, bound: ErrorBound = ErrorBound()) -> bool:
    """True when the bucket ratio reaches the 90% accuracy threshold."""
    return bucket_ratio(predicted, actual, bound) >= ACCURACY_THRESHOLD_PCT


def lifespan_class(series: LoadSeries, as_of: date) -> Lifespan:
    """Long-lived iff the server first appeared strictly more than 21 days
    before ``as_of``."""
    age_days = (as_of - series.first_day).days
    return Lifespan.LONG_LIVED if age_days > LONG_LIVED_MIN_AGE_DAYS else Lifespan.SHORT_LIVED


def span_days(start: date, n_days: int) -> tuple[date, ...]:
    """``n_days`` consecutive dates starting at ``start``."""
    if n_days < 1:
        raise ValueError("n_days must be >= 1")
    return tuple(start + timedelta(days=i) for i in range(n_days))


def _check_interval(days: Sequence[date]) -> tuple[date, int]:
    if len(days) == 0:
        raise ValueError("interval must hold at least one day")
    for prev, cur in zip(days, days[1:]):
        if (cur - prev).days != 1:
            raise ValueError("interval days must be consecutive")
    return days[0], len(days)


# Predictor-day offset per pattern test.
_DAILY_LAG = 1
_WEEKLY_LAG = 7


class _IntervalView:
    """Dense matrix over an interval plus enough lookback for lag tests.

    The pattern tests are strict about gaps: every day they need (interval
    days, and for lag tests the predictor days) must clear the coverage
    floor, otherwise the test is not evaluable at all.
    """

    def __init__(self, series: LoadSeries, days: Sequence[date], min_coverage: float):
        start, n = _check_interval(days)
        self.start = start
        self.n = n
        self.lookback = _WEEKLY_LAG
        self.mat = day_matrix(series, start - timedelta(days=self.lookback), n + self.lookback)
        present = ~np.isnan(self.mat)
        self.evaluable = present.sum(axis=1) / SLOTS_PER_DAY >= min_coverage

    def _day(self, row: int) -> date:
        return self.start + timedelta(days=row - self.lookback)

    def require_interval(self) -> None:
        for i in range(self.n):
            if not self.evaluable[self.lookback + i]:
                raise NotEvaluableError(
                    f"interval day {self._day(self.lookback + i).isoformat()} "
                    "is below the coverage floor"
                )

    def require_lag(self, lag: int) -> None:
        for i in range(self.n):
            p = self.lookback + i - lag
            if not self.evaluable[p]:
                raise NotEvaluableError(
                    f"predictor day {self._day(p).isoformat()} "
                    "is below the coverage floor"
                )

    def interval_rows(self) -> np.ndarray:
        return self.mat[self.lookback:]

    def lagged_pairs(self, lag: int):
        for i in range(self.n):
            t = self.lookback + i
            yield self.mat[t - lag], self.mat[t]


def _stable_ratios(view: _IntervalView, bound: ErrorBound) -> list[float]:
    view.require_interval()
    rows = view.interval_rows()
    if not np.any(~np.isnan(rows)):
        raise NotEvaluableError("interval holds no samples at all")
    mean = float(np.nanmean(rows))
    const = np.full(SLOTS_PER_DAY, mean)
    ratios = []
    for i in range(view.n):
        r = _ratio_or_none(const, rows[i], bound)
        ratios.append(r if r is not None else 0.0)
    return ratios


def _lagged_ratios(view: _IntervalView, lag: int, bound: ErrorBound) -> list[float]:
    view.require_interval()
    view.require_lag(lag)
    ratios = []
    for pred, act in view.lagged_pairs(lag):
        r = _ratio_or_none(pred, act, bound)
        ratios.append(r if r is not None else 0.0)
    return ratios


def _passes(ratios: list[float]) -> bool:
    return bool(ratios) and min(ratios) >= ACCURACY_THRESHOLD_PCT


def is_stable(
    series: LoadSeries,
    days: Sequence[date],
    bound: ErrorBound = ErrorBound(),
    min_coverage: float = DEFAULT_MIN_COVERAGE,
) -> bool:
    """True when the scalar mean load over the interval accurately predicts
    every day of the interval.  Any interval day below the coverage floor
    raises NotEvaluableError."""
    view = _IntervalView(series, days, min_coverage)
    return _passes(_stable_ratios(view, bound))


def has_daily_pattern(
    series: LoadSeries,
    days: Sequence[date],
    bound: ErrorBound = ErrorBound(),
    min_coverage: float = DEFAULT_MIN_COVERAGE,
) -> bool:
    """True when every interval day is accurately predicted by the day
    before it.  Raises NotEvaluableError when any interval day or the day
    before the first one is below the coverage floor."""
    view = _IntervalView(series, days, min_coverage)
    return _passes(_lagged_ratios(view, _DAILY_LAG, bound))


def has_weekly_pattern(
    series: LoadSeries,
    days: Sequence[date],
    bound: ErrorBound = ErrorBound(),
    min_coverage: float = DEFAULT_MIN_COVERAGE,
) -> bool:
    """True when every interval day is accurately predicted by the same
    weekday one week earlier AND the daily-pattern test fails (a server
    predictable day-over-day is daily, not weekly).  Raises
    NotEvaluableError when any needed day is below the coverage floor."""
    view = _IntervalView(series, days, min_coverage)
    weekly = _passes(_lagged_ratios(view, _WEEKLY_LAG, bound))
    if not weekly:
        return False
    return not _passes(_lagged_ratios(view, _DAILY_LAG, bound))


@dataclass(frozen=True)
class ClassificationResult:
    server_id: str
    interval_start: date
    interval_end: date
    server_class: ServerClass
    bucket_ratio_stats: dict

    def to_json_dict(self) -> dict:
        return {
            "server_id": self.server_id,
            "interval_start": self.interval_start.isoformat(),
            "interval_end": self.interval_end.isoformat(),
            "class": self.server_class.value,
            "bucket_ratio_stats": self.bucket_ratio_stats,
        }


def _stats(ratios: list[float]) -> dict:
    return {
        "n_days": len(ratios),
        "min": round(min(ratios), 6) if ratios else None,
        "mean": round(float(np.mean(ratios)), 6) if ratios else None,
    }


def classify_server_detailed(
    series: LoadSeries,
    days: Sequence[date],
    bound: ErrorBound = ErrorBound(),
    as_of: date | None = None,
    min_coverage: float = DEFAULT_MIN_COVERAGE,
) -> ClassificationResult:
    """Classify and keep the per-test bucket-ratio summaries that were
    actually computed (tests short-circuit in precedence order)."""
    _check_interval(days)
    if as_of is None:
        as_of = days[-1] + timedelta(days=1)
    stats: dict = {}

    def result(cls: ServerClass) -> ClassificationResult:
        return ClassificationResult(series.server_id, days[0], days[-1], cls, stats)

    if lifespan_class(series, as_of) is Lifespan.SHORT_LIVED:
        return result(ServerClass.SHORT_LIVED)

    view = _IntervalView(series, days, min_coverage)
    stable_ratios = _stable_ratios(view, bound)
    stats["stable"] = _stats(stable_ratios)
    if _passes(stable_ratios):
        return result(ServerClass.STABLE)

    daily_ratios = _lagged_ratios(view, _DAILY_LAG, bound)
    stats["daily"] = _stats(daily_ratios)
    if _passes(daily_ratios):
        return result(ServerClass.DAILY_PATTERN)

    weekly_ratios = _lagged_ratios(view, _WEEKLY_LAG, bound)
    stats["weekly"] = _stats(weekly_ratios)
    if _passes(weekly_ratios):
        return result(ServerClass.WEEKLY_PATTERN)

    return result(ServerClass.NO_PATTERN)


def classify_server(
    series: LoadSeries,
    days: Sequence[date],
    bound: ErrorBound = ErrorBound(),
    as_of: date | None = None,
    min_coverage: float = DEFAULT_MIN_COVERAGE,
) -> ServerClass:
    """Assign the server its class over the interval, testing in precedence
    order short-lived > stable > daily > weekly > no-pattern.  ``as_of``
    defaults to the day after the interval ends."""
    return classify_server_detailed(series, days, bound, as_of, min_coverage).server_class


def stable_by_stddev(series: LoadSeries, as_of: date) -> bool:
    """Alternative stability check: the sample range (max - min) over the
    3 days before ``as_of`` must not exceed one population standard
    deviation of the whole supplied series.

    Each of the 3 days must hold at least one sample, otherwise the check
    raises NotEvaluableError.
    """
    from .telemetry import MINUTES_PER_DAY, day_start_minute

    m1 = day_start_minute(as_of)
    m0 = m1 - 3 * MINUTES_PER_DAY
    ts = series.timestamps
    lo = int(np.searchsorted(ts, m0, side="left"))
    hi = int(np.searchsorted(ts, m1, side="left"))
    if lo == hi:
        raise NotEvaluableError("no samples in the 3 days before as_of")
    window_ts = ts[lo:hi]
    window_cpu = series.cpu[lo:hi]
    day_idx = (window_ts - m0) // MINUTES_PER_DAY
    if len(np.unique(day_idx)) < 3:
        raise NotEvaluableError("all 3 days before as_of need at least one sample")
    variation = float(window_cpu.max() - window_cpu.min())
    sigma = float(np.std(series.cpu))
    return variation <= sigma

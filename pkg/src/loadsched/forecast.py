"""Persistent (naive) next-day forecasters.

All variants predict a 288-slot day from recent history alone:

* ``prev-day``       - replicate the previous day slot by slot
* ``prev-equiv-day`` - replicate the same weekday one week earlier
* ``prev-week-avg``  - one scalar, the mean of all samples in the prior week
* ``seasonal-naive`` - slot-wise mean across all past days at a fixed lag
  (default 7), a cheap stand-in for heavier seasonal models

Absent history slots stay absent in the prediction (NaN), except for the
scalar variant which covers every slot.  Forecasters never look at or past
the target day.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import date, timedelta
from enum import Enum

import numpy as np

from .errors import InsufficientHistoryError
from .telemetry import SLOTS_PER_DAY, DaySlice, LoadSeries, day_matrix

__all__ = [
    "ForecasterKind",
    "ForecasterSpec",
    "ForecastResult",
    "required_history",
    "forecast",
]

_WEEK = 7


class ForecasterKind(Enum):
    PREV_DAY = "prev-day"
    PREV_EQUIV_DAY = "prev-equiv-day"
    PREV_WEEK_AVERAGE = "prev-week-avg"
    SEASONAL_NAIVE = "seasonal-naive"


@dataclass(frozen=True)
class ForecasterSpec:
    """A forecaster kind plus its parameters.  ``period_days`` applies to
    the seasonal variant only."""

    kind: ForecasterKind
    period_days: int = _WEEK

    def __post_init__(self):
        if self.period_days < 1:
            raise ValueError("period_days must be >= 1")

    @classmethod
    def from_string(cls, text: str) -> "ForecasterSpec":
        """Parse CLI forms like "prev-day" or "seasonal-naive:14"."""
        name, _, param = text.partition(":")
        try:
            kind = ForecasterKind(name)
        except ValueError as exc:
            valid = ", ".join(k.value for k in ForecasterKind)
            raise ValueError(f"unknown forecaster {text!r}; expected one of: {valid}") from exc
        if param and kind is not ForecasterKind.SEASONAL_NAIVE:
            raise ValueError(f"{name} takes no parameter")
        period = int(param) if param else _WEEK
        return cls(kind, period)

    @property
    def label(self) -> str:
        if self.kind is ForecasterKind.SEASONAL_NAIVE and self.period_days != _WEEK:
            return f"{self.kind.value}:{self.period_days}"
        return self.kind.value


def required_history(spec: ForecasterSpec) -> int:
    """Days of history that must exist before the target day."""
    if spec.kind is ForecasterKind.PREV_DAY:
        return 1
    if spec.kind is ForecasterKind.SEASONAL_NAIVE:
        return spec.period_days
    return _WEEK


@dataclass(frozen=True)
class ForecastResult:
    server_id: str
    target_day: date
    predicted: DaySlice
    forecaster: ForecasterSpec
    history_start: date
    history_end: date

    def to_json_dict(self) -> dict:
        vec = [None if np.isnan(v) else float(v) for v in self.predicted.slots]
        return {
            "server_id": self.server_id,
            "target_day": self.target_day.isoformat(),
            "forecaster": self.forecaster.label,
            "history_start": self.history_start.isoformat(),
            "history_end": self.history_end.isoformat(),
            "predicted": vec,
        }


def _require_days(series: LoadSeries, needed: list[date]) -> None:
    missing = [d for d in needed if d < series.first_day]
    if missing:
        names = ", ".join(d.isoformat() for d in missing)
        raise InsufficientHistoryError(
            f"server {series.server_id}: history starts {series.first_day.isoformat()}, "
            f"missing required days {names}",
            missing_days=missing,
        )


def _slotwise_mean(mat: np.ndarray) -> np.ndarray:
    sums = np.nansum(mat, axis=0)
    counts = np.count_nonzero(~np.isnan(mat), axis=0)
    out = np.full(SLOTS_PER_DAY, np.nan)
    present = counts > 0
    out[present] = sums[present] / counts[present]
    return out


def forecast(spec: ForecasterSpec, series: LoadSeries, target_day: date) -> ForecastResult:
    """Predict one target day.  Raises InsufficientHistoryError naming the
    missing days when the series starts too late, or when the scalar
    variant finds no sample at all in its lookback week."""
    kind = spec.kind

    if kind is ForecasterKind.PREV_DAY:
        src = target_day - timedelta(days=1)
        _require_days(series, [src])
        vec = day_matrix(series, src, 1)[0]
        hist = (src, src)

    elif kind is ForecasterKind.PREV_EQUIV_DAY:
        src = target_day - timedelta(days=_WEEK)
        _require_days(series, [src])
        vec = day_matrix(series, src, 1)[0]
        hist = (src, src)

    elif kind is ForecasterKind.PREV_WEEK_AVERAGE:
        start = target_day - timedelta(days=_WEEK)
        _require_days(series, [start])
        mat = day_matrix(series, start, _WEEK)
        n_present = np.count_nonzero(~np.isnan(mat))
        if n_present == 0:
            raise InsufficientHistoryError(
                f"server {series.server_id}: no samples in the week before "
                f"{target_day.isoformat()}",
                missing_days=[start + timedelta(days=i) for i in range(_WEEK)],
            )
        vec = np.full(SLOTS_PER_DAY, float(np.nansum(mat) / n_present))
        hist = (start, target_day - timedelta(days=1))

    else:  # SEASONAL_NAIVE
        p = spec.period_days
        nearest = target_day - timedelta(days=p)
        _require_days(series, [nearest])
        cycle_days = []
        d = nearest
        while d >= series.first_day:
            cycle_days.append(d)
            d -= timedelta(days=p)
        rows = [day_matrix(series, cd, 1)[0] for cd in cycle_days]
        vec = _slotwise_mean(np.vstack(rows))
        hist = (cycle_days[-1], nearest)

    predicted = DaySlice(series.server_id, target_day, vec)
    return ForecastResult(series.server_id, target_day, predicted, spec, hist[0], hist[1])

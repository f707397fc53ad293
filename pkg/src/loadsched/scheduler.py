"""Backup scheduling: place each due server's backup into a window.

Servers that have earned predictability (see lowload.is_predictable) get
the LL window of their next-day forecast; everything else keeps the default
window declared in its telemetry.  Once actuals for the backup day exist,
``impact_report`` scores every placement against what the default would
have cost.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import date
from enum import Enum
from typing import Iterable, Mapping, Sequence

import numpy as np

from .classify import ErrorBound
from .errors import NotEvaluableError
from .forecast import ForecastResult
from .lowload import (
    BackupDuration,
    PredictabilityRecord,
    Window,
    is_predictable,
    ll_window,
    window_avg,
)
from .telemetry import (
    DEFAULT_MIN_COVERAGE,
    MINUTES_PER_DAY,
    SLOT_MINUTES,
    DaySlice,
    LoadSeries,
)

__all__ = [
    "ScheduleSource",
    "BackupSchedule",
    "DueEntry",
    "FleetDueList",
    "ScheduleFailure",
    "declared_default_window",
    "schedule_backups",
    "CategoryCounts",
    "ImpactReport",
    "impact_report",
]

DEFAULT_BUSY_THRESHOLD_PCT = 60.0


class ScheduleSource(Enum):
    PREDICTED = "predicted"
    DEFAULT = "default"


@dataclass(frozen=True)
class BackupSchedule:
    """One placed backup.  ``default_window`` rides along so the impact of
    choosing ``window`` over it can be scored later without re-reading the
    fleet's telemetry."""

    server_id: str
    backup_day: date
    window: Window
    source: ScheduleSource
    expected_avg_load: float | None = None
    default_window: Window | None = None

    def to_json_dict(self) -> dict:
        return {
            "server_id": self.server_id,
            "backup_day": self.backup_day.isoformat(),
            "start_minute_utc": self.window.start_minute,
            "duration_min": self.window.duration_min,
            "source": self.source.value,
        }


@dataclass(frozen=True)
class DueEntry:
    server_id: str
    backup_day: date
    duration: BackupDuration


@dataclass(frozen=True)
class FleetDueList:
    """Due backups, at most one per server."""

    entries: tuple[DueEntry, ...]

    def __post_init__(self):
        entries = tuple(self.entries)
        seen = set()
        for e in entries:
            if e.server_id in seen:
                raise ValueError(f"server {e.server_id} is due more than once")
            seen.add(e.server_id)
        object.__setattr__(self, "entries", entries)

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)


@dataclass(frozen=True)
class ScheduleFailure:
    server_id: str
    backup_day: date
    message: str

    def to_json_dict(self) -> dict:
        return {
            "server_id": self.server_id,
            "backup_day": self.backup_day.isoformat(),
            "message": self.message,
        }


def declared_default_window(series: LoadSeries) -> Window:
    """The default backup window from telemetry, as a time-of-day window."""
    start = series.default_backup_start % MINUTES_PER_DAY
    length = series.default_backup_end - series.default_backup_start
    return Window(start // SLOT_MINUTES, length // SLOT_MINUTES)


def schedule_backups(
    due: FleetDueList | Iterable[DueEntry],
    forecasts: Mapping[str, ForecastResult],
    records: Mapping[str, Sequence[PredictabilityRecord]],
    defaults: Mapping[str, Window],
    bound: ErrorBound = ErrorBound(),
    min_coverage: float = DEFAULT_MIN_COVERAGE,
) -> tuple[list[BackupSchedule], list[ScheduleFailure]]:
    """Place every due backup, never refusing a server another server's
    fault: a server with neither a usable forecast nor a declared default
    yields a ScheduleFailure while the rest schedule normally.

    A server is scheduled off its forecast only when its record history
    passes the predictability gate AND a forecast for its backup day exists
    AND that forecast is complete enough to rank windows; any other path
    falls back to the default window.
    """
    if not isinstance(due, FleetDueList):
        due = FleetDueList(tuple(due))
    schedules: list[BackupSchedule] = []
    failures: list[ScheduleFailure] = []
    for entry in due:
        sid = entry.server_id
        default_w = defaults.get(sid)
        placed = None
        fc = forecasts.get(sid)
        if fc is not None and fc.target_day == entry.backup_day and is_predictable(records.get(sid, ())):
            try:
                w = ll_window(fc.predicted, entry.duration, min_coverage)
                placed = BackupSchedule(
                    sid,
                    entry.backup_day,
                    w,
                    ScheduleSource.PREDICTED,
                    expected_avg_load=window_avg(fc.predicted, w),
                    default_window=default_w,
                )
            except NotEvaluableError:
                placed = None
        if placed is None:
            if default_w is None:
                failures.append(
                    ScheduleFailure(sid, entry.backup_day,
                                    "no usable forecast and no declared default window")
                )
                continue
            placed = BackupSchedule(
                sid,
                entry.backup_day,
                default_w,
                ScheduleSource.DEFAULT,
                default_window=default_w,
            )
        schedules.append(placed)
    schedules.sort(key=lambda s: s.server_id)
    failures.sort(key=lambda f: f.server_id)
    return schedules, failures


@dataclass
class CategoryCounts:
    """Placement outcomes within one population of scored backups."""

    n: int = 0
    moved_and_better: int = 0
    default_already_good: int = 0
    predicted_worse: int = 0

    def add(self, category: str) -> None:
        self.n += 1
        setattr(self, category, getattr(self, category) + 1)

    def fractions(self) -> dict:
        def frac(k: int) -> float | None:
            return round(k / self.n, 6) if self.n else None

        return {
            "n": self.n,
            "moved_and_better": frac(self.moved_and_better),
            "default_already_good": frac(self.default_already_good),
            "predicted_worse": frac(self.predicted_worse),
        }


@dataclass
class ImpactReport:
    """How placements fared against the declared defaults, overall and for
    busy servers (actual peak above the busy threshold)."""

    busy_threshold: float
    overall: CategoryCounts = field(default_factory=CategoryCounts)
    busy: CategoryCounts = field(default_factory=CategoryCounts)
    excluded_missing_actuals: int = 0
    excluded_no_default: int = 0
    excluded_empty_window: int = 0

    @property
    def total_scored(self) -> int:
        return self.overall.n

    def to_json_dict(self) -> dict:
        return {
            "busy_threshold": self.busy_threshold,
            "overall": self.overall.fractions(),
            "busy": self.busy.fractions(),
            "excluded": {
                "missing_actuals": self.excluded_missing_actuals,
                "no_default_window": self.excluded_no_default,
                "empty_window": self.excluded_empty_window,
            },
        }

    def format_table(self) -> str:
        def line(name: str, c: CategoryCounts) -> str:
            f = c.fractions()

            def pct(v) -> str:
                return "   n/a" if v is None else f"{100 * v:5.1f}%"

            return (
                f"  {name:<8} n={c.n:<6} moved-and-better {pct(f['moved_and_better'])}   "
                f"default-already-good {pct(f['default_already_good'])}   "
                f"predicted-worse {pct(f['predicted_worse'])}"
            )

        excluded = (
            self.excluded_missing_actuals + self.excluded_no_default + self.excluded_empty_window
        )
        return "\n".join(
            [
                f"backup impact (busy = peak > {self.busy_threshold:g}% cpu)",
                line("overall", self.overall),
                line("busy", self.busy),
                f"  excluded {excluded} (no actuals {self.excluded_missing_actuals}, "
                f"no default {self.excluded_no_default}, empty window {self.excluded_empty_window})",
            ]
        )


def impact_report(
    schedules: Sequence[BackupSchedule],
    actuals: Mapping[str, DaySlice],
    busy_threshold: float = DEFAULT_BUSY_THRESHOLD_PCT,
    bound: ErrorBound = ErrorBound(),
) -> ImpactReport:
    """Score each schedule once backup-day actuals exist.

    For each schedule the saving is avg actual load in the default window
    minus avg actual load in the chosen window.  Savings beyond
    ``bound.over`` count as moved-and-better, deficits beyond it as
    predicted-worse, anything between as default-already-good (the bound is
    the resolution below which two windows are considered equally good).
    Schedules lacking actuals or a default window are excluded but counted.
    """
    report = ImpactReport(busy_threshold=busy_threshold)
    for sched in schedules:
        actual = actuals.get(sched.server_id)
        if actual is None or actual.day != sched.backup_day:
            report.excluded_missing_actuals += 1
            continue
        if sched.default_window is None:
            report.excluded_no_default += 1
            continue
        try:
            saving = window_avg(actual, sched.default_window) - window_avg(actual, sched.window)
        except NotEvaluableError:
            report.excluded_empty_window += 1
            continue
        if saving > bound.over:
            category = "moved_and_better"
        elif saving < -bound.over:
            category = "predicted_worse"
        else:
            category = "default_already_good"
        report.overall.add(category)
        present = actual.slots[~np.isnan(actual.slots)]
        if len(present) and float(present.max()) > busy_threshold:
            report.busy.add(category)
    return report

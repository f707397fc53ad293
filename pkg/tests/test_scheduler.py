"""Backup placement and the impact scoring of placements vs defaults."""

from __future__ import annotations

from datetime import timedelta

import numpy as np
import pytest

from loadsched.forecast import ForecasterKind, ForecasterSpec, forecast
from loadsched.lowload import (
    PREDICTABLE_MIN_SPAN_DAYS,
    BackupDuration,
    PredictabilityRecord,
    Window,
)
from loadsched.scheduler import (
    BackupSchedule,
    DueEntry,
    FleetDueList,
    ScheduleSource,
    declared_default_window,
    impact_report,
    schedule_backups,
)
from loadsched.telemetry import SLOTS_PER_DAY

from helpers import D0, constant_days, series_from_matrix, slice_of

B60 = BackupDuration(60)
BACKUP_DAY = D0 + timedelta(days=28)
PREV_DAY = ForecasterSpec(ForecasterKind.PREV_DAY)


def clean_records(sid: str, n_days: int = PREDICTABLE_MIN_SPAN_DAYS, **overrides):
    fields = dict(evaluable=True, ll_window_correct=True, load_accurate=True)
    fields.update(overrides)
    return [
        PredictabilityRecord(sid, BACKUP_DAY - timedelta(days=n_days - i), **fields)
        for i in range(n_days)
    ]


def valley_series(sid: str, valley_slot: int = 36, n_days: int = 29):
    """Constant 50 with a deep valley at the same slot every day."""
    mat = constant_days(n_days, 50.0)
    mat[:, valley_slot : valley_slot + 12] = 5.0
    return series_from_matrix(mat, server_id=sid)


def forecast_for(series, day=BACKUP_DAY):
    return forecast(PREV_DAY, series, day)


def test_declared_default_window_is_time_of_day():
    s = series_from_matrix(constant_days(1, 40.0),
                           default_start_offset_min=180, default_minutes=120)
    w = declared_default_window(s)
    assert w == Window(36, 24)
    assert w.start_minute == 180 and w.duration_min == 120


def test_predictable_server_gets_predicted_window():
    # Forecast valley at slot 36 = 03:00 UTC.
    s = valley_series("srv-a")
    due = FleetDueList((DueEntry("srv-a", BACKUP_DAY, B60),))
    schedules, failures = schedule_backups(
        due,
        {"srv-a": forecast_for(s)},
        {"srv-a": clean_records("srv-a")},
        {"srv-a": declared_default_window(s)},
    )
    assert failures == []
    (sched,) = schedules
    assert sched.source is ScheduleSource.PREDICTED
    assert sched.window == Window(36, 12)
    assert sched.window.start_minute == 180   # 03:00
    assert sched.expected_avg_load == pytest.approx(5.0)
    assert sched.default_window == declared_default_window(s)
    d = sched.to_json_dict()
    assert d == {
        "server_id": "srv-a",
        "backup_day": BACKUP_DAY.isoformat(),
        "start_minute_utc": 180,
        "duration_min": 60,
        "source": "predicted",
    }


def test_short_history_server_falls_back_to_default():
    s = valley_series("srv-b")
    schedules, failures = schedule_backups(
        [DueEntry("srv-b", BACKUP_DAY, B60)],
        {"srv-b": forecast_for(s)},
        {"srv-b": clean_records("srv-b", n_days=14)},   # 14 < 21 day span
        {"srv-b": declared_default_window(s)},
    )
    assert failures == []
    assert schedules[0].source is ScheduleSource.DEFAULT
    assert schedules[0].window == declared_default_window(s)
    assert schedules[0].expected_avg_load is None


def test_one_bad_record_forces_default():
    s = valley_series("srv-c")
    records = clean_records("srv-c")
    records[5] = PredictabilityRecord(
        "srv-c", records[5].day, evaluable=True,
        ll_window_correct=False, load_accurate=True,
    )
    schedules, _ = schedule_backups(
        [DueEntry("srv-c", BACKUP_DAY, B60)],
        {"srv-c": forecast_for(s)},
        {"srv-c": records},
        {"srv-c": declared_default_window(s)},
    )
    assert schedules[0].source is ScheduleSource.DEFAULT


def test_forecast_for_wrong_day_is_not_used():
    s = valley_series("srv-d")
    schedules, _ = schedule_backups(
        [DueEntry("srv-d", BACKUP_DAY, B60)],
        {"srv-d": forecast_for(s, day=BACKUP_DAY - timedelta(days=1))},
        {"srv-d": clean_records("srv-d")},
        {"srv-d": declared_default_window(s)},
    )
    assert schedules[0].source is ScheduleSource.DEFAULT


def test_unrankable_forecast_falls_back_to_default():
    # Forecast present but almost entirely absent: the LL search cannot
    # clear the coverage floor, so the default window wins.
    mat = constant_days(29, 50.0)
    mat[27, 24:] = np.nan   # backup day predicts from day 27 (prev-day)
    s = series_from_matrix(mat, server_id="srv-e")
    schedules, failures = schedule_backups(
        [DueEntry("srv-e", BACKUP_DAY, B60)],
        {"srv-e": forecast_for(s)},
        {"srv-e": clean_records("srv-e")},
        {"srv-e": declared_default_window(s)},
    )
    assert failures == []
    assert schedules[0].source is ScheduleSource.DEFAULT


def test_no_forecast_and_no_default_is_a_failure():
    schedules, failures = schedule_backups(
        [DueEntry("srv-f", BACKUP_DAY, B60)],
        {},
        {},
        {},
    )
    assert schedules == []
    (f,) = failures
    assert f.server_id == "srv-f"
    assert "no declared default" in f.message
    assert f.to_json_dict()["backup_day"] == BACKUP_DAY.isoformat()


def test_every_due_server_is_scheduled_or_failed_sorted():
    servers = [f"srv-{i:02d}" for i in (3, 0, 2, 1)]
    series = {sid: valley_series(sid) for sid in servers}
    due = [DueEntry(sid, BACKUP_DAY, B60) for sid in servers]
    forecasts = {sid: forecast_for(series[sid]) for sid in servers[:2]}
    records = {sid: clean_records(sid) for sid in servers[:2]}
    defaults = {sid: declared_default_window(series[sid]) for sid in servers if sid != "srv-02"}
    schedules, failures = schedule_backups(due, forecasts, records, defaults)
    assert [s.server_id for s in schedules] == ["srv-00", "srv-01", "srv-03"]
    assert [f.server_id for f in failures] == ["srv-02"]
    assert len(schedules) + len(failures) == len(due)


def test_due_list_rejects_duplicates():
    with pytest.raises(ValueError, match="more than once"):
        FleetDueList((DueEntry("s", BACKUP_DAY, B60), DueEntry("s", BACKUP_DAY, B60)))


# ---------------------------------------------------------------------------
# Impact report


def _sched(sid: str, chosen_start: int, default_start: int | None = 120):
    default_w = None if default_start is None else Window(default_start, 12)
    return BackupSchedule(
        sid, BACKUP_DAY, Window(chosen_start, 12), ScheduleSource.PREDICTED,
        default_window=default_w,
    )


def day_with(levels: dict[int, float], base: float = 30.0, sid: str = "s"):
    vals = np.full(SLOTS_PER_DAY, base)
    for start, level in levels.items():
        vals[start : start + 12] = level
    return slice_of(vals, server_id=sid, day=BACKUP_DAY)


def test_impact_categories():
    actuals = {
        # moved-and-better: default sits on a 50-point plateau, chosen on 5.
        "m": day_with({120: 50.0, 0: 5.0}, sid="m"),
        # default-already-good: both windows cost the same.
        "g": day_with({}, sid="g"),
        # predicted-worse: chosen window is 20 points above the default.
        "w": day_with({120: 10.0, 0: 30.0}, sid="w"),
    }
    schedules = [_sched("m", 0), _sched("g", 0), _sched("w", 0)]
    rep = impact_report(schedules, actuals)
    assert rep.overall.n == 3
    assert rep.overall.moved_and_better == 1
    assert rep.overall.default_already_good == 1
    assert rep.overall.predicted_worse == 1
    f = rep.to_json_dict()["overall"]
    assert f["moved_and_better"] == pytest.approx(1 / 3, abs=1e-6)
    assert sum(f[k] for k in ("moved_and_better", "default_already_good", "predicted_worse")) \
        == pytest.approx(1.0, abs=1e-5)


def test_impact_saving_threshold_is_the_over_bound():
    # Saving of exactly +10 is not "beyond" the bound: default-already-good.
    actuals = {
        "edge": day_with({120: 40.0, 0: 30.0}, sid="edge"),   # saving 10
        "win": day_with({120: 40.5, 0: 30.0}, sid="win"),     # saving 10.5
    }
    rep = impact_report([_sched("edge", 0), _sched("win", 0)], actuals)
    assert rep.overall.moved_and_better == 1
    assert rep.overall.default_already_good == 1


def test_impact_busy_subset():
    actuals = {
        "quiet": day_with({120: 50.0, 0: 5.0}, base=20.0, sid="quiet"),
        "busy": day_with({120: 80.0, 0: 5.0}, base=20.0, sid="busy"),
    }
    rep = impact_report([_sched("quiet", 0), _sched("busy", 0)], actuals, busy_threshold=60.0)
    assert rep.overall.n == 2
    assert rep.busy.n == 1
    assert rep.busy.moved_and_better == 1


def test_impact_exclusions_are_counted():
    actuals = {
        "a": day_with({}, sid="a"),
        "c": slice_of(np.full(SLOTS_PER_DAY, np.nan), server_id="c", day=BACKUP_DAY),
    }
    schedules = [
        _sched("a", 0, default_start=None),   # no default window
        _sched("b", 0),                       # no actuals at all
        _sched("c", 0),                       # actuals entirely absent
    ]
    rep = impact_report(schedules, actuals)
    assert rep.total_scored == 0
    assert rep.excluded_no_default == 1
    assert rep.excluded_missing_actuals == 1
    assert rep.excluded_empty_window == 1
    d = rep.to_json_dict()
    assert d["overall"]["moved_and_better"] is None
    assert d["excluded"] == {"missing_actuals": 1, "no_default_window": 1, "empty_window": 1}


def test_impact_actuals_for_wrong_day_are_missing():
    wrong_day = day_with({}, sid="a")
    wrong = slice_of(wrong_day.slots, server_id="a", day=BACKUP_DAY + timedelta(days=1))
    rep = impact_report([_sched("a", 0)], {"a": wrong})
    assert rep.excluded_missing_actuals == 1


def test_impact_table_renders():
    rep = impact_report([_sched("a", 0)], {"a": day_with({}, sid="a")})
    text = rep.format_table()
    assert "overall" in text and "busy" in text and "excluded 0" in text

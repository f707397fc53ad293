"""Telemetry model, CSV parsing/writing, schema inference, validation."""

from __future__ import annotations

from datetime import date, timedelta

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from loadsched.errors import TelemetryParseError
from loadsched.telemetry import (
    COLUMNS,
    MINUTES_PER_DAY,
    SLOTS_PER_DAY,
    DaySlice,
    LoadSeries,
    coverage,
    day_matrix,
    day_start_minute,
    infer_schema,
    minute_to_day,
    parse_telemetry,
    slice_day,
    telemetry_schema,
    validate,
    write_telemetry,
)

from helpers import D0, constant_days, series_from_matrix

HEADER = ",".join(COLUMNS)


def _write_rows(path, rows: list[str], header: str = HEADER) -> str:
    path.write_text("\n".join([header] + rows) + "\n", encoding="utf-8")
    return str(path)


def _row(sid: str, ts: int, cpu, start: int = 120, end: int = 180) -> str:
    return f"{sid},{ts},{cpu},{start},{end}"


# ---------------------------------------------------------------------------
# Day helpers and the in-memory model


def test_day_minute_round_trip():
    assert day_start_minute(date(1970, 1, 1)) == 0
    assert day_start_minute(date(1970, 1, 2)) == MINUTES_PER_DAY
    for d in (date(1970, 1, 1), D0, date(2030, 12, 31)):
        m = day_start_minute(d)
        assert minute_to_day(m) == d
        assert minute_to_day(m + MINUTES_PER_DAY - 1) == d


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(timestamps=[10, 5], cpu=[1.0, 2.0]),                  # not increasing
        dict(timestamps=[0, 0], cpu=[1.0, 2.0]),                   # duplicate
        dict(timestamps=[3], cpu=[1.0]),                           # misaligned
        dict(timestamps=[-5], cpu=[1.0]),                          # negative
        dict(timestamps=[0], cpu=[100.5]),                         # cpu too high
        dict(timestamps=[0], cpu=[-0.1]),                          # cpu negative
        dict(timestamps=[0], cpu=[float("nan")]),                  # cpu NaN
        dict(timestamps=[], cpu=[]),                               # empty
        dict(timestamps=[0], cpu=[1.0], default_backup_start=180, default_backup_end=120),
        dict(timestamps=[0], cpu=[1.0], default_backup_start=1400, default_backup_end=1500),
    ],
)
def test_series_invariants_rejected(kwargs):
    base = dict(server_id="s", default_backup_start=120, default_backup_end=180)
    base.update(kwargs)
    with pytest.raises(ValueError):
        LoadSeries(**base)


def test_series_arrays_are_frozen():
    s = series_from_matrix(constant_days(1, 40.0))
    with pytest.raises(ValueError):
        s.cpu[0] = 99.0
    with pytest.raises(ValueError):
        s.timestamps[0] = 0


def test_day_slice_shape_and_range():
    with pytest.raises(ValueError):
        DaySlice("s", D0, np.zeros(10))
    with pytest.raises(ValueError):
        DaySlice("s", D0, np.full(SLOTS_PER_DAY, 101.0))
    ds = DaySlice("s", D0, np.full(SLOTS_PER_DAY, np.nan))
    assert ds.present_count == 0


def test_slice_day_places_samples_and_nan():
    mat = constant_days(2, 30.0)
    mat[0, 100] = np.nan
    mat[1, :] = np.nan
    mat[1, 7] = 55.0
    s = series_from_matrix(mat)

    d0 = slice_day(s, D0)
    assert np.isnan(d0.slots[100])
    assert d0.present_count == SLOTS_PER_DAY - 1
    assert coverage(d0) == pytest.approx((SLOTS_PER_DAY - 1) / SLOTS_PER_DAY)

    d1 = slice_day(s, D0 + timedelta(days=1))
    assert d1.slots[7] == 55.0
    assert d1.present_count == 1

    # A day outside the span is entirely absent.
    assert slice_day(s, D0 + timedelta(days=5)).present_count == 0


def test_day_matrix_pads_missing_days_with_nan():
    s = series_from_matrix(constant_days(3, 20.0))
    mat = day_matrix(s, D0 - timedelta(days=2), 5)
    assert mat.shape == (5, SLOTS_PER_DAY)
    assert np.all(np.isnan(mat[:2]))
    assert np.all(mat[2:] == 20.0)


# ---------------------------------------------------------------------------
# Round trip


def test_write_parse_round_trip_sorts_by_id(tmp_path):
    mat_b = constant_days(2, 10.0)
    mat_b[0, 3] = np.nan
    b = series_from_matrix(mat_b, server_id="srv-b")
    a = series_from_matrix(constant_days(1, 77.25), server_id="srv-a",
                           default_start_offset_min=300, default_minutes=30)
    path = tmp_path / "t.csv"
    write_telemetry([b, a], path)

    back = parse_telemetry(path)
    assert [s.server_id for s in back] == ["srv-a", "srv-b"]
    got_a, got_b = back
    assert np.array_equal(got_a.timestamps, a.timestamps)
    assert np.array_equal(got_a.cpu, a.cpu)
    assert got_a.default_backup_start == a.default_backup_start
    assert got_a.default_backup_end == a.default_backup_end
    assert np.array_equal(got_b.cpu, b.cpu)


def test_write_append_mode(tmp_path):
    a = series_from_matrix(constant_days(1, 5.0), server_id="srv-a")
    b = series_from_matrix(constant_days(1, 6.0), server_id="srv-b")
    path = tmp_path / "t.csv"
    write_telemetry([a], path)
    write_telemetry([b], path, mode="a")
    assert [s.server_id for s in parse_telemetry(path)] == ["srv-a", "srv-b"]


def test_parse_header_only_file(tmp_path):
    path = tmp_path / "t.csv"
    assert parse_telemetry(_write_rows(path, [])) == []


@settings(max_examples=25, deadline=None)
@given(st.data())
def test_round_trip_random_presence(tmp_path_factory, data):
    mask = data.draw(
        st.lists(st.booleans(), min_size=SLOTS_PER_DAY, max_size=SLOTS_PER_DAY)
    )
    if not any(mask):
        mask[0] = True
    vals = np.where(mask, 42.5, np.nan).reshape(1, SLOTS_PER_DAY)
    s = series_from_matrix(vals)
    path = tmp_path_factory.mktemp("rt") / "t.csv"
    write_telemetry([s], path)
    (back,) = parse_telemetry(path)
    assert np.array_equal(back.timestamps, s.timestamps)
    assert np.array_equal(back.cpu, s.cpu)


# ---------------------------------------------------------------------------
# Parse errors name the offending data row


def test_parse_rejects_bad_header(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("a,b,c\n1,2,3\n", encoding="utf-8")
    with pytest.raises(TelemetryParseError, match="header"):
        parse_telemetry(path)


@pytest.mark.parametrize(
    "rows, match",
    [
        ([_row("s", 0, 40), _row("s", 5, "oops")], r"row 2: .*not float"),
        ([_row("s", 0, 150.0)], r"row 1: .*out of range"),
        ([_row("s", 0, 40), _row("s", 7, 40)], r"row 2: .*out of range"),
        ([_row("s", 0, 40), _row("s", 0, 41)], r"row 2: duplicate sample"),
        ([_row("s", 0, 40, 120, 180), _row("s", 5, 40, 240, 300)],
         r"conflicting default backup"),
        ([_row("s", 0, 40, 180, 120)], r"row 1: .*empty \(180 >= 120\)"),
        ([_row("", 0, 40)], r"server_id: empty value"),
    ],
)
def test_parse_errors_are_row_numbered(tmp_path, rows, match):
    path = _write_rows(tmp_path / "t.csv", rows)
    with pytest.raises(TelemetryParseError, match=match):
        parse_telemetry(path)


def test_parse_rejects_day_crossing_default_window(tmp_path):
    # Window of 120 minutes starting 1 hour before midnight spills into the
    # next UTC day.
    start = MINUTES_PER_DAY - 60
    path = _write_rows(tmp_path / "t.csv", [_row("s", 0, 40, start, start + 120)])
    with pytest.raises(TelemetryParseError, match="one UTC day"):
        parse_telemetry(path)


# ---------------------------------------------------------------------------
# Validation


def test_validate_clean_file_passes(tmp_path):
    path = _write_rows(tmp_path / "t.csv", [_row("s", 0, 40.5), _row("s", 5, 41.0)])
    report = validate(path, telemetry_schema())
    assert report.ok and report.verdict == "pass"
    assert report.anomalies == ()


def test_validate_header_mismatch_is_row_zero(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("x,y\n1,2\n", encoding="utf-8")
    report = validate(path, telemetry_schema())
    assert not report.ok
    assert report.anomalies[0].kind == "schema"
    assert report.anomalies[0].row == 0


def test_validate_flags_each_violation_once(tmp_path):
    rows = [
        _row("s", 0, 40),          # clean
        _row("s", 5, 150),         # cpu above maximum        -> bound
        _row("s", 12, 40),         # timestamp misaligned     -> bound
        "s,15,40,120",             # wrong field count        -> schema
        _row("s", 20, "abc"),      # cpu not a float          -> schema
        _row("s", 25, 40, 200, 100),  # start >= end          -> bound
    ]
    report = validate(_write_rows(tmp_path / "t.csv", rows), telemetry_schema())
    assert not report.ok
    by_row = {(a.row, a.kind) for a in report.anomalies}
    assert by_row == {(2, "bound"), (3, "bound"), (4, "schema"), (5, "schema"), (6, "bound")}
    # Rows come out sorted.
    assert [a.row for a in report.anomalies] == sorted(a.row for a in report.anomalies)


def test_validate_gap_is_informational(tmp_path):
    rows = [_row("s", 0, 40), _row("s", 5, 40), _row("s", 20, 40)]
    report = validate(_write_rows(tmp_path / "t.csv", rows), telemetry_schema())
    assert report.ok, "gaps must not fail the verdict"
    kinds = [a.kind for a in report.anomalies]
    assert kinds == ["gap"]
    assert "(5, 20)" in report.anomalies[0].message
    d = report.to_json_dict()
    assert d["verdict"] == "pass" and d["anomalies"][0]["kind"] == "gap"


def test_validate_no_gap_scan_when_rows_fail(tmp_path):
    rows = [_row("s", 0, 150), _row("s", 20, 40)]
    report = validate(_write_rows(tmp_path / "t.csv", rows), telemetry_schema())
    assert not report.ok
    assert all(a.kind != "gap" for a in report.anomalies)


# ---------------------------------------------------------------------------
# Schema inference


def test_infer_schema_kinds_and_bounds(tmp_path):
    rows = [_row("s", 0, 40.5), _row("s", 5, 39.0), _row("t", 10, 41.25)]
    path = _write_rows(tmp_path / "t.csv", rows)
    spec = infer_schema(path)
    assert spec.names == COLUMNS
    assert spec.column("server_id").kind == "string"
    assert spec.column("timestamp_min").kind == "int"
    assert spec.column("timestamp_min").min_value == 0
    assert spec.column("timestamp_min").max_value == 10
    assert spec.column("avg_cpu_pct").kind == "float"
    assert spec.column("avg_cpu_pct").min_value == 39.0


def test_infer_schema_is_self_consistent(tmp_path):
    rows = [
        _row("srv-a", 0, 12.5),
        _row("srv-a", 5, 99.0),
        _row("srv-b", 0, 0.0, 600, 720),
    ]
    path = _write_rows(tmp_path / "t.csv", rows)
    report = validate(path, infer_schema(path))
    assert report.verdict == "pass"
    assert all(a.kind == "gap" for a in report.anomalies)


def test_infer_schema_rejects_empty(tmp_path):
    path = _write_rows(tmp_path / "t.csv", [])
    with pytest.raises(TelemetryParseError):
        infer_schema(path)

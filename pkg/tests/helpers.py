"""Shared builders for tests: dense day matrices in, LoadSeries out."""

from __future__ import annotations

from datetime import date

import numpy as np

from loadsched.telemetry import (
    SLOT_MINUTES,
    SLOTS_PER_DAY,
    DaySlice,
    LoadSeries,
    day_start_minute,
)

# A Monday, far enough from the epoch that weekly lookback never underflows.
D0 = date(2023, 1, 2)


def series_from_matrix(
    mat: np.ndarray,
    server_id: str = "srv-00000",
    first_day: date = D0,
    default_start_offset_min: int = 120,
    default_minutes: int = 60,
) -> LoadSeries:
    """Build a series from an (n_days, 288) matrix; NaN slots are absent."""
    mat = np.asarray(mat, dtype=np.float64).reshape(-1, SLOTS_PER_DAY)
    base = day_start_minute(first_day)
    minutes = base + np.arange(mat.size) * SLOT_MINUTES
    flat = mat.ravel()
    present = ~np.isnan(flat)
    start = base + default_start_offset_min
    return LoadSeries(
        server_id=server_id,
        timestamps=minutes[present],
        cpu=flat[present],
        default_backup_start=start,
        default_backup_end=start + default_minutes,
    )


def slice_of(values, server_id: str = "srv-00000", day: date = D0) -> DaySlice:
    arr = np.asarray(values, dtype=np.float64)
    if arr.shape != (SLOTS_PER_DAY,):
        raise ValueError("need exactly 288 values")
    return DaySlice(server_id, day, arr)


def constant_days(n_days: int, level: float) -> np.ndarray:
    return np.full((n_days, SLOTS_PER_DAY), float(level))

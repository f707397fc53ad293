"""
Day-ahead forecasts from history alone
======================================

Runs the four persistence forecasters against a 14-day series whose level
climbs one point per day, so every prediction can be checked in your head.
Day i sits at 10 + i; days 0..13 are history and day 14 is the target.
"""

from datetime import date, timedelta

import numpy as np

from loadsched.forecast import (
    ForecasterKind,
    ForecasterSpec,
    InsufficientHistoryError,
    forecast,
)
from loadsched.telemetry import LoadSeries, day_start_minute

first_day = date(2023, 3, 6)
n_days = 14
ts = np.concatenate([
    day_start_minute(first_day + timedelta(days=i)) + np.arange(288) * 5
    for i in range(n_days)
])
cpu = np.concatenate([np.full(288, 10.0 + i) for i in range(n_days)])
series = LoadSeries("srv-00000", ts, cpu, 120, 180)
target = first_day + timedelta(days=n_days)

specs = [
    ForecasterSpec(ForecasterKind.PREV_DAY),
    ForecasterSpec(ForecasterKind.PREV_EQUIV_DAY),
    ForecasterSpec(ForecasterKind.PREV_WEEK_AVERAGE),
    ForecasterSpec(ForecasterKind.SEASONAL_NAIVE, period_days=3),
]
print(f"history {series.first_day} .. {series.last_day} at levels 10..23, "
      f"target {target}\n")
for spec in specs:
    result = forecast(spec, series, target)
    level = float(np.nanmean(result.predicted.slots))
    print(f"  {spec.label:<18} -> flat {level:.2f}")

# prev_day copies day 13 (level 23); prev_equiv_day copies day 7 (17);
# prev_week_average averages levels 17..23 (20); seasonal_naive at period 3
# averages days 11, 8, 5, 2 (level 10 + mean(11, 8, 5, 2) = 16.5).

# Forecasts never see the target day or anything after it.  Rewriting the
# final history day changes prev_day but not prev_equiv_day.
mutated = LoadSeries("srv-00000", ts, np.where(ts >= day_start_minute(series.last_day), 99.0, cpu), 120, 180)
for kind in (ForecasterKind.PREV_DAY, ForecasterKind.PREV_EQUIV_DAY):
    before = np.nanmean(forecast(ForecasterSpec(kind), series, target).predicted.slots)
    after = np.nanmean(forecast(ForecasterSpec(kind), mutated, target).predicted.slots)
    print(f"  last-day rewrite moved {kind.value}: {before:.1f} -> {after:.1f}")

# Asking for more lookback than exists names the missing days.
young = LoadSeries("srv-00001", ts[: 2 * 288], cpu[: 2 * 288], 120, 180)
try:
    forecast(ForecasterSpec(ForecasterKind.PREV_EQUIV_DAY), young, young.last_day + timedelta(days=1))
except InsufficientHistoryError as err:
    print(f"\n2-day server, week-lag forecaster: {err}")

"""
Lowest-load windows and day verdicts
====================================

Finds the cheapest backup window in a day, then walks through the two
flags a forecast earns per server-day: did its window land close enough
to the true one, and did the predicted load stay inside the error band.
The two are independent; the last section shows all their combinations.
"""

from datetime import date

import numpy as np

from loadsched.classify import ErrorBound
from loadsched.lowload import (
    BackupDuration,
    evaluate_server_day,
    ll_window,
    load_accurate_in_window,
    window_avg,
)
from loadsched.telemetry import DaySlice

DAY = date(2023, 5, 1)


def day_of(values) -> DaySlice:
    return DaySlice("srv-00000", DAY, np.asarray(values, dtype=float))


# A plateau at 60 with a 90-minute valley at 03:20.
actual_vals = np.full(288, 60.0)
actual_vals[40:58] = 12.0
actual = day_of(actual_vals)

for minutes in (30, 60, 240):
    w = ll_window(actual, BackupDuration(minutes))
    print(f"cheapest {minutes:>3}-min window starts {w.start_minute:>4} min "
          f"into the day (slot {w.start_slot}), avg load "
          f"{window_avg(actual, w):.2f}")

# A 240-minute window cannot fit inside the valley, so it overlaps the
# plateau and the average rises.  Ties break to the earliest start.

# Verdict 1: window correctness.  Search the predicted day, then charge
# the chosen window at ACTUAL load; it passes when it costs at most
# bound.over more than the true optimum.
bound = ErrorBound()
b60 = BackupDuration(60)
predicted_vals = np.full(288, 60.0)
predicted_vals[100:118] = 5.0          # valley predicted in the wrong place
predicted = day_of(predicted_vals)

w_pred = ll_window(predicted, b60)
w_true = ll_window(actual, b60)
gap = window_avg(actual, w_pred) - window_avg(actual, w_true)
print(f"\nmisplaced valley: predicted window slot {w_pred.start_slot}, "
      f"true slot {w_true.start_slot}, extra cost {gap:.1f} "
      f"(correct iff <= {bound.over})")

# Verdict 2: load accuracy.  Slot-wise errors predicted - actual must land
# in [-under, +over] on at least 90 percent of the chosen window's slots.
accurate, ratio = load_accurate_in_window(predicted, actual, w_pred, bound)
print(f"in-window in-band ratio {ratio:.1f} (accurate iff >= 90): {accurate}")

# evaluate_server_day bundles both flags into a per-day record.
rec = evaluate_server_day(predicted, actual, b60)
print(f"record: evaluable={rec.evaluable} "
      f"ll_window_correct={rec.ll_window_correct} load_accurate={rec.load_accurate}")

# The flags are independent: a forecast can point at the right window
# while lying about its level, or miss the valley entirely while being
# honest about the region it picked instead.
shallow_dip = np.full(288, 60.0)
shallow_dip[100:118] = 59.0
cases = {
    "identical": actual_vals,
    "level +20 everywhere": np.clip(actual_vals + 20.0, 0, 100),
    "valley missed, honest level": shallow_dip,
    "valley moved and level off": np.clip(predicted_vals + 20.0, 0, 100),
}
print("\nforecast variant                 correct  accurate")
for name, vals in cases.items():
    rec = evaluate_server_day(day_of(vals), actual, b60)
    print(f"  {name:<30} {str(rec.ll_window_correct):<8} {rec.load_accurate}")

"""
Parsing and validating telemetry CSV
====================================

Builds a tiny two-server telemetry file by hand, parses it into per-server
load series, then shows what the validator says about a file with planted
faults.
"""

import tempfile
from datetime import date
from pathlib import Path

import numpy as np

from loadsched.telemetry import (
    coverage,
    day_matrix,
    infer_schema,
    parse_telemetry,
    slice_day,
    telemetry_schema,
    validate,
)

HEADER = "server_id,timestamp_min,avg_cpu_pct,default_backup_start_min,default_backup_end_min\n"

workdir = Path(tempfile.mkdtemp(prefix="loadsched-demo-"))

# Two servers, two days each, one sample every 5 minutes.  web-01 idles at
# night and works during the day; db-01 sits flat.  Day 19359 of the epoch
# is 2023-01-02.
rows = []
for day in (19359, 19360):
    for slot in range(288):
        minute = day * 1440 + slot * 5
        web = 8.0 if slot < 72 else 55.0
        rows.append(f"web-01,{minute},{web},120,180\n")
        rows.append(f"db-01,{minute},30.0,1200,1260\n")

clean = workdir / "clean.csv"
clean.write_text(HEADER + "".join(rows), encoding="utf-8")

series = parse_telemetry(clean)
print(f"parsed {len(series)} servers from {clean.name}")
for s in series:
    print(f"  {s.server_id}: {len(s.timestamps)} samples, "
          f"{s.first_day} .. {s.last_day}, "
          f"default backup {s.default_backup_start}..{s.default_backup_end} min")

# A single UTC day as a 288-slot vector; absent slots would be NaN.
web = next(s for s in series if s.server_id == "web-01")
day_one = slice_day(web, date(2023, 1, 2))
print(f"\nweb-01 on {day_one.day}: coverage {coverage(day_one):.3f}, "
      f"night mean {np.nanmean(day_one.slots[:72]):.1f}, "
      f"office-hours mean {np.nanmean(day_one.slots[72:]):.1f}")

# All days at once as an (n_days, 288) matrix.
mat = day_matrix(web, web.first_day, 2)
print(f"day_matrix: {mat.shape[0]} days x {mat.shape[1]} slots, "
      f"day means {np.nanmean(mat, axis=1).round(2)}")

# The expected schema can also be recovered from data alone.
schema = infer_schema(clean)
print("\ninferred schema:")
for col in schema.columns:
    bounds = ""
    if col.kind != "string":
        bounds = f" in [{col.min_value}, {col.max_value}]"
    print(f"  {col.name}: {col.kind}{bounds}")

# Now break the file: a malformed timestamp and an out-of-range CPU value.
bad_rows = list(rows)
bad_rows[4] = "web-01,oops,55.0,120,180\n"
bad_rows[11] = bad_rows[11].replace("30.0", "130.0")
dirty = workdir / "dirty.csv"
dirty.write_text(HEADER + "".join(bad_rows), encoding="utf-8")

report = validate(dirty, telemetry_schema())
print(f"\nvalidation of {dirty.name}: verdict={report.verdict}")
for a in report.anomalies:
    print(f"  row {a.row}: [{a.kind}] {a.message}")

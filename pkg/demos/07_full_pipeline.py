"""
End-to-end pipeline run
=======================

Writes a labeled fleet to CSV, runs the full pipeline (validate, parse,
classify, forecast, evaluate, schedule, persist), pokes at the artifacts
it leaves behind, and prints the run report.  Everything here is also
reachable from the command line:

    python -m loadsched.cli generate --config fleet.json --out fleet.csv
    python -m loadsched.cli run --input fleet.csv --out results/
    python -m loadsched.cli report --out results/
"""

import json
import tempfile
from pathlib import Path

from loadsched.classify import ServerClass
from loadsched.pipeline import PipelineConfig, report, run
from loadsched.synthgen import FleetConfig, generate_fleet, write_fleet

workdir = Path(tempfile.mkdtemp(prefix="loadsched-demo-"))
fleet_csv = workdir / "fleet.csv"
actuals_csv = workdir / "actuals.csv"

fleet = generate_fleet(FleetConfig(
    server_count=80,
    mix={
        ServerClass.STABLE: 0.4,
        ServerClass.DAILY_PATTERN: 0.2,
        ServerClass.WEEKLY_PATTERN: 0.1,
        ServerClass.NO_PATTERN: 0.15,
        ServerClass.SHORT_LIVED: 0.15,
    },
    weeks=4,
    seed=14,
    default_on_peak_fraction=0.15,
    trailing_actual_days=1,
))
write_fleet(fleet, fleet_csv, actuals_path=actuals_csv)

manifest = run(PipelineConfig(
    input_path=str(fleet_csv),
    results_dir=str(workdir / "results"),
    region="demo",
    parallelism=2,
))
print(f"run {manifest.run_id}: status={manifest.status}")
print(f"  counts: {manifest.counts}")
print(f"  stages: {', '.join(f'{k} {v:.2f}s' for k, v in manifest.stage_seconds.items())}")

out_dir = Path(manifest.out_dir)
print(f"\nartifacts in {out_dir}:")
for p in sorted(out_dir.iterdir()):
    print(f"  {p.name:<22} {p.stat().st_size:>9} bytes")

# Each schedule line says where the backup went and why.
lines = (out_dir / "schedules.jsonl").read_text().splitlines()
print(f"\nfirst 3 of {len(lines)} schedules:")
for line in lines[:3]:
    row = json.loads(line)
    print(f"  {row['server_id']}: {row['source']:<9} day {row['backup_day']} "
          f"start {row['start_minute_utc']} min")

# The report summarizes a finished run; with backup-day actuals it also
# scores the placements against the declared defaults.
summary = report(results_dir=str(workdir / "results"), actuals_path=str(actuals_csv))
table = summary.pop("impact_table")
counts = summary["counts"]
print(f"\nreport for run {summary['run_id']}:")
print(f"  servers {counts['servers']}: "
      f"{counts['schedules_predicted']} predicted, "
      f"{counts['schedules_default']} default")
print(f"  classes: {summary['class_distribution']}")
print(f"  windows correct {summary['metrics']['pct_windows_correct']:.1f}%, "
      f"accurate {summary['metrics']['pct_windows_accurate']:.1f}%, "
      f"servers predictable {summary['metrics']['pct_predictable']:.1f}%")
print()
print(table)

# Identical inputs and knobs give an identical run id; the artifact bytes
# do not depend on the parallelism used to produce them.
again = run(PipelineConfig(
    input_path=str(fleet_csv),
    results_dir=str(workdir / "results2"),
    region="demo",
    parallelism=1,
))
same = (Path(again.out_dir) / "schedules.jsonl").read_bytes() == \
    (out_dir / "schedules.jsonl").read_bytes()
print(f"\nrerun with parallelism 1: same run id {again.run_id == manifest.run_id}, "
      f"same schedule bytes {same}")

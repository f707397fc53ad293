"""Command line entry points.

Three subcommands::

    loadsched run      --input fleet.csv --out results/ [--forecaster prev-day]
                       [--bound +10:-5] [--backup-min 60] [--coverage 0.9]
                       [--parallel 1] [--region local]
    loadsched report   --out results/ [--run-id ID] [--actuals day.csv]
                       [--busy-threshold 60]
    loadsched generate --config fleet.json --out fleet.csv
                       [--labels labels.json] [--actuals actuals.csv]

Every flag of ``run`` can instead come from an environment variable with
the ``LOADSCHED_`` prefix (flag name upper-cased, dashes to underscores,
e.g. ``LOADSCHED_BACKUP_MIN=120``); explicit flags win.

Exit status: 0 on success, 2 when input validation rejects the telemetry,
1 on any other error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .classify import ErrorBound
from .errors import LoadschedError
from .forecast import ForecasterSpec
from .pipeline import PipelineConfig, report, run
from .synthgen import FleetConfig, generate_fleet, write_fleet

ENV_PREFIX = "LOADSCHED_"

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_VALIDATION = 2


def _env(flag: str, fallback=None):
    return os.environ.get(ENV_PREFIX + flag.replace("-", "_").upper(), fallback)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="loadsched",
        description="Predict per-server load and schedule backups into low-load windows.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="validate, classify, forecast, and schedule a fleet")
    p_run.add_argument("--input", default=_env("input"), help="telemetry CSV path")
    p_run.add_argument("--out", default=_env("out"), help="results directory")
    p_run.add_argument("--forecaster", default=_env("forecaster", "prev-day"),
                       help="prev-day | prev-equiv-day | prev-week-avg | seasonal-naive[:days]")
    p_run.add_argument("--bound", default=_env("bound", "+10:-5"),
                       help="accuracy band as +over:-under CPU points")
    p_run.add_argument("--backup-min", type=int, default=int(_env("backup-min", "60")),
                       help="backup duration in minutes")
    p_run.add_argument("--coverage", type=float, default=float(_env("coverage", "0.9")),
                       help="minimum fraction of present slots per evaluated day")
    p_run.add_argument("--parallel", type=int, default=int(_env("parallel", "1")),
                       help="worker processes (results are identical for any value)")
    p_run.add_argument("--region", default=_env("region", "local"),
                       help="label recorded in the run manifest")

    p_rep = sub.add_parser("report", help="summarize a finished run")
    p_rep.add_argument("--out", default=_env("out"), help="results directory")
    p_rep.add_argument("--run-id", default=None, help="run to summarize (default: latest)")
    p_rep.add_argument("--actuals", default=None,
                       help="backup-day telemetry CSV; adds the impact section")
    p_rep.add_argument("--busy-threshold", type=float, default=60.0,
                       help="busy server cutoff, %% of CPU capacity")

    p_gen = sub.add_parser("generate", help="generate a synthetic fleet CSV")
    p_gen.add_argument("--config", required=True, help="fleet config JSON path")
    p_gen.add_argument("--out", required=True, help="output telemetry CSV path")
    p_gen.add_argument("--labels", default=None, help="also write ground-truth labels JSON")
    p_gen.add_argument("--actuals", default=None,
                       help="also write trailing actual days as telemetry CSV")
    return parser


def _cmd_run(args) -> int:
    if not args.input or not args.out:
        print("run: --input and --out are required (or LOADSCHED_INPUT/LOADSCHED_OUT)",
              file=sys.stderr)
        return EXIT_ERROR
    config = PipelineConfig(
        input_path=args.input,
        results_dir=args.out,
        forecaster=ForecasterSpec.from_string(args.forecaster),
        bound=ErrorBound.parse(args.bound),
        backup_minutes=args.backup_min,
        min_coverage=args.coverage,
        parallelism=args.parallel,
        region=args.region,
    )
    manifest = run(config)
    if not manifest.ok:
        print(f"validation failed: {manifest.counts.get('anomalies', 0)} anomalies "
              f"(see {manifest.out_dir}/validation.json)", file=sys.stderr)
        return EXIT_VALIDATION
    print(f"run {manifest.run_id} complete")
    print(f"  servers    {manifest.counts.get('servers', 0)}")
    print(f"  scheduled  {manifest.counts.get('schedules_predicted', 0)} predicted, "
          f"{manifest.counts.get('schedules_default', 0)} default, "
          f"{manifest.counts.get('schedule_failures', 0)} failed")
    print(f"  artifacts  {manifest.out_dir}")
    return EXIT_OK


def _cmd_report(args) -> int:
    if not args.out:
        print("report: --out is required (or LOADSCHED_OUT)", file=sys.stderr)
        return EXIT_ERROR
    summary = report(
        args.out,
        run_id=args.run_id,
        actuals_path=args.actuals,
        busy_threshold=args.busy_threshold,
    )
    table = summary.pop("impact_table", None)
    print(json.dumps(summary, indent=2))
    if table is not None:
        print()
        print(table)
    return EXIT_OK


def _cmd_generate(args) -> int:
    with open(args.config, "r", encoding="utf-8") as fh:
        config = FleetConfig.from_json_dict(json.load(fh))
    if args.actuals and config.trailing_actual_days == 0:
        print("generate: --actuals needs trailing_actual_days > 0 in the config",
              file=sys.stderr)
        return EXIT_ERROR
    fleet = generate_fleet(config)
    write_fleet(fleet, args.out, labels_path=args.labels, actuals_path=args.actuals)
    print(f"wrote {sum(s.n_samples for s in fleet.history)} samples "
          f"for {len(fleet.history)} servers to {args.out}")
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "report":
            return _cmd_report(args)
        return _cmd_generate(args)
    except (LoadschedError, ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

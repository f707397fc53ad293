"""End-to-end run orchestration and reporting.

A run validates one telemetry CSV, classifies every server over its
trailing week, replays per-day forecasts to build predictability records,
forecasts the backup day (the day after the last observed day), schedules
every server's backup, and persists all artifacts under
``<results_dir>/<run_id>/``:

    validation.json        verdict + anomalies
    classes.jsonl          one classification row per server
    forecasts.jsonl        backup-day forecast per forecastable server
    records.jsonl          one row per evaluated server-day
    schedules.jsonl        placed backups (external format)
    schedule_state.jsonl   schedules + default windows, for later scoring
    metrics.json           fleet-level prediction quality
    manifest.json          stage counts, timings, failures

The run id is a digest of the input bytes and the semantic configuration,
so re-running the same input yields the same id.  Worker parallelism is an
execution detail: any ``parallelism`` degree produces byte-identical
artifacts (timings live only in the manifest, which is excluded from that
guarantee).
"""

from __future__ import annotations

import hashlib
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta, timezone
from pathlib import Path

from .classify import (
    ErrorBound,
    Lifespan,
    ServerClass,
    classify_server_detailed,
    lifespan_class,
    span_days,
)
from .errors import InsufficientHistoryError, NotEvaluableError
from .forecast import ForecasterKind, ForecasterSpec, forecast, required_history
from .lowload import (
    BackupDuration,
    PredictabilityRecord,
    Window,
    evaluate_server_day,
    is_predictable,
)
from .scheduler import (
    BackupSchedule,
    DueEntry,
    FleetDueList,
    ScheduleSource,
    declared_default_window,
    impact_report,
    schedule_backups,
)
from .telemetry import (
    DEFAULT_MIN_COVERAGE,
    LoadSeries,
    ValidationReport,
    _parse_frame,
    _read_header,
    _scan_rows,
    _typed_frame,
    _frame_anomalies,
    _gap_anomalies,
    Anomaly,
    parse_telemetry,
    slice_day,
    telemetry_schema,
)

__all__ = ["PipelineConfig", "RunManifest", "run", "report"]

try:
    from importlib.metadata import version as _pkg_version

    _VERSION = _pkg_version("loadsched")
except Exception:  # pragma: no cover - not installed
    _VERSION = "0.0.0"


@dataclass(frozen=True)
class PipelineConfig:
    """Semantic knobs of a run.  ``parallelism`` affects wall time only."""

    input_path: str
    results_dir: str
    forecaster: ForecasterSpec = field(default_factory=lambda: ForecasterSpec(ForecasterKind.PREV_DAY))
    bound: ErrorBound = field(default_factory=ErrorBound)
    backup_minutes: int = 60
    min_coverage: float = DEFAULT_MIN_COVERAGE
    parallelism: int = 1
    region: str = "local"

    def __post_init__(self):
        BackupDuration(self.backup_minutes)
        if not (0.0 < self.min_coverage <= 1.0):
            raise ValueError("min_coverage must lie in (0, 1]")
        if self.parallelism < 1:
            raise ValueError("parallelism must be >= 1")


def _digest_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 23), b""):
            h.update(chunk)
    return h.hexdigest()


def _run_id(input_digest: str, config: PipelineConfig) -> str:
    key = "|".join(
        [
            input_digest,
            config.forecaster.label,
            config.bound.label,
            str(config.backup_minutes),
            repr(config.min_coverage),
            config.region,
        ]
    )
    return hashlib.sha256(key.encode("utf-8")).hexdigest()[:12]


@dataclass
class RunManifest:
    run_id: str
    region: str
    status: str
    input_path: str
    input_digest: str
    forecaster: str
    bound: str
    backup_minutes: int
    min_coverage: float
    parallelism: int
    package_version: str = _VERSION
    created_utc: str = ""
    counts: dict = field(default_factory=dict)
    stage_seconds: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)
    out_dir: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "complete"

    def to_json_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "region": self.region,
            "status": self.status,
            "input_path": self.input_path,
            "input_digest": self.input_digest,
            "forecaster": self.forecaster,
            "bound": self.bound,
            "backup_minutes": self.backup_minutes,
            "min_coverage": self.min_coverage,
            "parallelism": self.parallelism,
            "package_version": self.package_version,
            "created_utc": self.created_utc,
            "counts": self.counts,
            "stage_seconds": self.stage_seconds,
            "failures": self.failures,
        }


# Worker-side configuration, set once per process.
_CFG: dict | None = None


def _init_worker(payload: dict) -> None:
    global _CFG
    _CFG = payload


def _eval_one(series: LoadSeries) -> dict:
    """Classify one server, replay its per-day forecasts into
    predictability records, and forecast its backup day.  Unclassifiable
    servers (nothing evaluable in the trailing week) skip forecasting and
    evaluation and will fall back to their default schedule."""
    cfg = _CFG
    fspec: ForecasterSpec = cfg["forecaster"]
    bound: ErrorBound = cfg["bound"]
    duration: BackupDuration = cfg["duration"]
    cov: float = cfg["min_coverage"]
    backup_day: date = cfg["backup_day"]

    interval_len = min(7, (series.last_day - series.first_day).days + 1)
    interval = span_days(series.last_day - timedelta(days=interval_len - 1), interval_len)
    base_row = {
        "server_id": series.server_id,
        "interval_start": interval[0].isoformat(),
        "interval_end": interval[-1].isoformat(),
    }
    try:
        cls_res = classify_server_detailed(series, interval, bound, as_of=backup_day, min_coverage=cov)
    except NotEvaluableError as exc:
        return {
            "server_id": series.server_id,
            "class_row": {**base_row, "class": None, "bucket_ratio_stats": {}, "reason": str(exc)},
            "classified": False,
            "forecast": None,
            "forecast_reason": "skipped: unclassifiable",
            "records": [],
            "long_lived": lifespan_class(series, backup_day) is Lifespan.LONG_LIVED,
        }

    records: list[PredictabilityRecord] = []
    eval_start = series.first_day + timedelta(days=required_history(fspec))
    day = eval_start
    while day <= series.last_day:
        actual = slice_day(series, day)
        try:
            predicted = forecast(fspec, series, day).predicted
            records.append(evaluate_server_day(predicted, actual, duration, bound, cov))
        except InsufficientHistoryError as exc:
            records.append(
                PredictabilityRecord(series.server_id, day, evaluable=False, reason=str(exc))
            )
        day += timedelta(days=1)

    fc = None
    fc_reason = None
    try:
        fc = forecast(fspec, series, backup_day)
    except InsufficientHistoryError as exc:
        fc_reason = str(exc)

    return {
        "server_id": series.server_id,
        "class_row": cls_res.to_json_dict(),
        "classified": True,
        "forecast": fc,
        "forecast_reason": fc_reason,
        "records": records,
        "long_lived": lifespan_class(series, backup_day) is Lifespan.LONG_LIVED,
    }


def _write_json(path: Path, data: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(data, fh, indent=2)
        fh.write("\n")


def _write_jsonl(path: Path, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write(json.dumps(row, separators=(",", ":")))
            fh.write("\n")


def _validation_report(path) -> tuple[ValidationReport, object]:
    """Validate and, when clean, hand back the typed frame so the run does
    not read the input twice."""
    spec = telemetry_schema()
    header = _read_header(path)
    if tuple(header) != spec.names:
        report = ValidationReport.from_anomalies(
            [Anomaly("schema", 0, f"header mismatch: expected {list(spec.names)}, got {header}")]
        )
        return report, None
    try:
        df = _typed_frame(path, spec)
    except Exception:
        return ValidationReport.from_anomalies(_scan_rows(path, spec)), None
    anomalies = _frame_anomalies(df, spec)
    failing = any(a.kind in ("schema", "bound") for a in anomalies)
    if not failing:
        anomalies.extend(_gap_anomalies(df))
    anomalies.sort(key=lambda a: (a.row, a.kind, a.message))
    report = ValidationReport.from_anomalies(anomalies)
    return report, (df if report.ok else None)


def run(config: PipelineConfig) -> RunManifest:
    """Execute the full pipeline; see the module docstring for stages and
    artifacts.  Returns the manifest; ``manifest.ok`` is False when input
    validation failed (artifacts then hold the validation report only)."""
    timer = time.perf_counter
    stage_seconds: dict[str, float] = {}

    t = timer()
    digest = _digest_file(config.input_path)
    run_id = _run_id(digest, config)
    out_dir = Path(config.results_dir) / run_id
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(
        run_id=run_id,
        region=config.region,
        status="running",
        input_path=str(config.input_path),
        input_digest=digest,
        forecaster=config.forecaster.label,
        bound=config.bound.label,
        backup_minutes=config.backup_minutes,
        min_coverage=config.min_coverage,
        parallelism=config.parallelism,
        created_utc=datetime.now(timezone.utc).isoformat(),
        out_dir=str(out_dir),
    )
    stage_seconds["digest"] = timer() - t

    t = timer()
    validation, df = _validation_report(config.input_path)
    _write_json(out_dir / "validation.json", validation.to_json_dict())
    stage_seconds["validate"] = timer() - t
    manifest.counts["anomalies"] = len(validation.anomalies)
    if not validation.ok:
        manifest.status = "validation_failed"
        manifest.stage_seconds = stage_seconds
        _write_json(out_dir / "manifest.json", manifest.to_json_dict())
        return manifest

    t = timer()
    series_list = _parse_frame(df)
    del df
    stage_seconds["parse"] = timer() - t
    manifest.counts["servers"] = len(series_list)
    manifest.counts["samples"] = int(sum(s.n_samples for s in series_list))

    duration = BackupDuration(config.backup_minutes)
    if series_list:
        last_day = max(s.last_day for s in series_list)
        backup_day = last_day + timedelta(days=1)
    else:
        backup_day = None

    t = timer()
    payload = {
        "forecaster": config.forecaster,
        "bound": config.bound,
        "duration": duration,
        "min_coverage": config.min_coverage,
        "backup_day": backup_day,
    }
    if config.parallelism > 1 and len(series_list) > 1:
        with ProcessPoolExecutor(
            max_workers=config.parallelism,
            initializer=_init_worker,
            initargs=(payload,),
        ) as pool:
            chunk = max(1, len(series_list) // (config.parallelism * 8))
            results = list(pool.map(_eval_one, series_list, chunksize=chunk))
    else:
        _init_worker(payload)
        results = [_eval_one(s) for s in series_list]
    stage_seconds["evaluate"] = timer() - t

    t = timer()
    class_rows = [r["class_row"] for r in results]
    forecasts = {r["server_id"]: r["forecast"] for r in results if r["forecast"] is not None}
    records = {r["server_id"]: r["records"] for r in results}
    defaults = {s.server_id: declared_default_window(s) for s in series_list}
    due = FleetDueList(
        tuple(DueEntry(s.server_id, backup_day, duration) for s in series_list)
    ) if series_list else FleetDueList(())
    schedules, failures = schedule_backups(
        due, forecasts, records, defaults, config.bound, config.min_coverage
    )
    stage_seconds["schedule"] = timer() - t

    t = timer()
    all_records = [rec for r in results for rec in r["records"]]
    evaluable = [rec for rec in all_records if rec.evaluable]
    n_eval = len(evaluable)
    long_lived = [r for r in results if r["long_lived"]]
    n_predictable = sum(1 for r in long_lived if is_predictable(records[r["server_id"]]))
    metrics = {
        "pct_windows_correct": (
            round(100.0 * sum(1 for rec in evaluable if rec.ll_window_correct) / n_eval, 6)
            if n_eval else None
        ),
        "pct_windows_accurate": (
            round(100.0 * sum(1 for rec in evaluable if rec.load_accurate) / n_eval, 6)
            if n_eval else None
        ),
        "pct_predictable": (
            round(100.0 * n_predictable / len(long_lived), 6) if long_lived else None
        ),
        "counts": {
            "records": len(all_records),
            "records_evaluable": n_eval,
            "servers_long_lived": len(long_lived),
            "servers_predictable": n_predictable,
        },
    }

    state_rows = []
    for s in schedules:
        row = s.to_json_dict()
        row["expected_avg_load"] = None if s.expected_avg_load is None else round(s.expected_avg_load, 6)
        row["default_start_minute"] = None if s.default_window is None else s.default_window.start_minute
        row["default_duration_min"] = None if s.default_window is None else s.default_window.duration_min
        state_rows.append(row)

    _write_jsonl(out_dir / "classes.jsonl", class_rows)
    _write_jsonl(
        out_dir / "forecasts.jsonl",
        (forecasts[sid].to_json_dict() for sid in sorted(forecasts)),
    )
    _write_jsonl(out_dir / "records.jsonl", (rec.to_json_dict() for rec in all_records))
    _write_jsonl(out_dir / "schedules.jsonl", (s.to_json_dict() for s in schedules))
    _write_jsonl(out_dir / "schedule_state.jsonl", state_rows)
    _write_json(out_dir / "metrics.json", metrics)
    stage_seconds["persist"] = timer() - t

    n_classified = sum(1 for r in results if r["classified"])
    manifest.counts.update(
        {
            "classified": n_classified,
            "unclassifiable": len(results) - n_classified,
            "forecasted": len(forecasts),
            "forecast_skipped": n_classified - len(forecasts),
            "records": len(all_records),
            "schedules_predicted": sum(1 for s in schedules if s.source is ScheduleSource.PREDICTED),
            "schedules_default": sum(1 for s in schedules if s.source is ScheduleSource.DEFAULT),
            "schedule_failures": len(failures),
        }
    )
    manifest.failures = [{"stage": "schedule", **f.to_json_dict()} for f in failures]
    manifest.status = "complete"
    manifest.stage_seconds = stage_seconds
    _write_json(out_dir / "manifest.json", manifest.to_json_dict())
    return manifest


def _load_schedule_state(out_dir: Path) -> list[BackupSchedule]:
    schedules = []
    with open(out_dir / "schedule_state.jsonl", "r", encoding="utf-8") as fh:
        for line in fh:
            row = json.loads(line)
            default_w = None
            if row["default_start_minute"] is not None:
                default_w = Window(
                    row["default_start_minute"] // 5, row["default_duration_min"] // 5
                )
            schedules.append(
                BackupSchedule(
                    server_id=row["server_id"],
                    backup_day=date.fromisoformat(row["backup_day"]),
                    window=Window(row["start_minute_utc"] // 5, row["duration_min"] // 5),
                    source=ScheduleSource(row["source"]),
                    expected_avg_load=row["expected_avg_load"],
                    default_window=default_w,
                )
            )
    return schedules


def _pick_run(results_dir: Path, run_id: str | None) -> Path:
    if run_id is not None:
        out_dir = results_dir / run_id
        if not (out_dir / "manifest.json").exists():
            raise FileNotFoundError(f"no manifest under {out_dir}")
        return out_dir
    candidates = sorted(
        (p for p in results_dir.iterdir() if (p / "manifest.json").exists()),
        key=lambda p: (p / "manifest.json").stat().st_mtime,
    )
    if not candidates:
        raise FileNotFoundError(f"no runs under {results_dir}")
    return candidates[-1]


def report(
    results_dir,
    run_id: str | None = None,
    actuals_path=None,
    busy_threshold: float = 60.0,
) -> dict:
    """Summarize a finished run: headline metrics, class distribution, and,
    when backup-day actuals are supplied, the impact of the placements
    against the declared defaults."""
    out_dir = _pick_run(Path(results_dir), run_id)
    with open(out_dir / "manifest.json", "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    summary: dict = {
        "run_id": manifest["run_id"],
        "region": manifest["region"],
        "status": manifest["status"],
        "counts": manifest["counts"],
    }
    if manifest["status"] != "complete":
        _write_json(out_dir / "report.json", summary)
        return summary

    with open(out_dir / "metrics.json", "r", encoding="utf-8") as fh:
        summary["metrics"] = json.load(fh)

    distribution: dict[str, int] = {}
    with open(out_dir / "classes.jsonl", "r", encoding="utf-8") as fh:
        for line in fh:
            row = json.loads(line)
            key = row["class"] if row["class"] is not None else "unclassifiable"
            distribution[key] = distribution.get(key, 0) + 1
    order = [c.value for c in ServerClass] + ["unclassifiable"]
    summary["class_distribution"] = {k: distribution[k] for k in order if k in distribution}

    if actuals_path is not None:
        schedules = _load_schedule_state(out_dir)
        actual_series = parse_telemetry(actuals_path)
        by_id = {s.server_id: s for s in actual_series}
        slices = {}
        for sched in schedules:
            s = by_id.get(sched.server_id)
            if s is not None:
                slices[sched.server_id] = slice_day(s, sched.backup_day)
        impact = impact_report(schedules, slices, busy_threshold)
        summary["impact"] = impact.to_json_dict()
        summary["impact_table"] = impact.format_table()
    _write_json(out_dir / "report.json", summary)
    return summary

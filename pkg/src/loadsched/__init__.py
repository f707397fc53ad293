"""Load prediction and low-load backup scheduling for server fleets.

The package turns per-server 5-minute CPU telemetry into backup schedules:
parse and validate the telemetry, classify each server's behaviour,
forecast the next day with persistent forecasters, find lowest-load
windows, track per-day prediction verdicts until a server earns
predictability, and place backups accordingly.  A synthetic fleet
generator with known ground truth and an end-to-end pipeline (also exposed
as the ``loadsched`` command) tie it together.
"""

from .classify import (
    ACCURACY_THRESHOLD_PCT,
    LONG_LIVED_MIN_AGE_DAYS,
    ClassificationResult,
    ErrorBound,
    Lifespan,
    ServerClass,
    bucket_ratio,
    classify_server,
    classify_server_detailed,
    has_daily_pattern,
    has_weekly_pattern,
    is_accurate,
    is_stable,
    lifespan_class,
    span_days,
    stable_by_stddev,
)
from .errors import (
    InsufficientHistoryError,
    LoadschedError,
    NotEvaluableError,
    SchedulingError,
    TelemetryParseError,
    UndefinedMetricError,
    UndefinedRatioError,
)
from .forecast import ForecasterKind, ForecasterSpec, ForecastResult, forecast, required_history
from .lowload import (
    PREDICTABLE_MIN_SPAN_DAYS,
    BackupDuration,
    PredictabilityRecord,
    Window,
    evaluate_server_day,
    is_predictable,
    ll_window,
    ll_window_correct,
    load_accurate_in_window,
    mase,
    mean_nrmse,
    window_avg,
)
from .pipeline import PipelineConfig, RunManifest, report, run
from .scheduler import (
    BackupSchedule,
    DueEntry,
    FleetDueList,
    ImpactReport,
    ScheduleFailure,
    ScheduleSource,
    declared_default_window,
    impact_report,
    schedule_backups,
)
from .synthgen import FleetConfig, GeneratedFleet, ValleySpec, generate_fleet, write_fleet
from .telemetry import (
    DEFAULT_MIN_COVERAGE,
    MINUTES_PER_DAY,
    SLOT_MINUTES,
    SLOTS_PER_DAY,
    Anomaly,
    ColumnSpec,
    DaySlice,
    LoadSample,
    LoadSeries,
    SchemaSpec,
    ValidationReport,
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

__version__ = "0.1.0"

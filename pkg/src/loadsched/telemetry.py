"""Telemetry ingestion: the 5-minute CPU sample model, CSV parsing and
writing, schema inference, and validation reporting.

Input files are UTF-8 CSV (LF or CRLF) with one header row::

    server_id,timestamp_min,avg_cpu_pct,default_backup_start_min,default_backup_end_min

``timestamp_min`` is minutes since the Unix epoch, aligned to the 5-minute
grid.  A UTC day therefore holds 288 slots.  Slots with no sample are
"absent" and surface as NaN in day slices; absence is legal and is handled
downstream by a coverage rule rather than rejected here.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from datetime import date, timedelta
from typing import Iterable, Iterator, NamedTuple

import numpy as np
import pandas as pd

from .errors import TelemetryParseError

__all__ = [
    "SLOT_MINUTES",
    "SLOTS_PER_DAY",
    "MINUTES_PER_DAY",
    "DEFAULT_MIN_COVERAGE",
    "COLUMNS",
    "EPOCH",
    "LoadSample",
    "LoadSeries",
    "DaySlice",
    "ColumnSpec",
    "SchemaSpec",
    "Anomaly",
    "ValidationReport",
    "day_start_minute",
    "minute_to_day",
    "slice_day",
    "day_matrix",
    "coverage",
    "parse_telemetry",
    "write_telemetry",
    "infer_schema",
    "telemetry_schema",
    "validate",
]

SLOT_MINUTES = 5
SLOTS_PER_DAY = 288
MINUTES_PER_DAY = SLOT_MINUTES * SLOTS_PER_DAY

# Minimum fraction of a day's 288 slots that must be present before the day
# can take part in any evaluation.
DEFAULT_MIN_COVERAGE = 0.9

COLUMNS = (
    "server_id",
    "timestamp_min",
    "avg_cpu_pct",
    "default_backup_start_min",
    "default_backup_end_min",
)

EPOCH = date(1970, 1, 1)

_DTYPES = {
    "server_id": "category",
    "timestamp_min": np.int64,
    "avg_cpu_pct": np.float64,
    "default_backup_start_min": np.int64,
    "default_backup_end_min": np.int64,
}


def day_start_minute(day: date) -> int:
    """Minutes since epoch at 00:00 UTC of ``day``."""
    return (day - EPOCH).days * MINUTES_PER_DAY


def minute_to_day(minute: int) -> date:
    """UTC date containing the given minutes-since-epoch instant."""
    return EPOCH + timedelta(days=minute // MINUTES_PER_DAY)


class LoadSample(NamedTuple):
    timestamp_min: int
    avg_cpu_pct: float


@dataclass(frozen=True)
class LoadSeries:
    """All samples of one server, ordered by time.

    Invariants enforced at construction: timestamps strictly increasing and
    5-minute aligned, CPU within [0, 100], and a default backup window that
    is non-empty and does not cross a UTC day boundary.  Arrays are frozen
    (read-only) so instances are safe to share across workers.
    """

    server_id: str
    timestamps: np.ndarray
    cpu: np.ndarray
    default_backup_start: int
    default_backup_end: int

    def __post_init__(self):
        # Copy on the way in: freezing a caller-owned array in place would
        # be a side effect nobody asked for.
        ts = np.array(self.timestamps, dtype=np.int64)
        cpu = np.array(self.cpu, dtype=np.float64)
        if ts.ndim != 1 or cpu.ndim != 1 or len(ts) != len(cpu):
            raise ValueError("timestamps and cpu must be 1-d arrays of equal length")
        if len(ts) == 0:
            raise ValueError("a series must hold at least one sample")
        if np.any(ts[1:] <= ts[:-1]):
            raise ValueError("timestamps must be strictly increasing")
        if ts[0] < 0 or np.any(ts % SLOT_MINUTES != 0):
            raise ValueError("timestamps must be non-negative multiples of 5")
        if np.any(np.isnan(cpu)) or np.any(cpu < 0.0) or np.any(cpu > 100.0):
            raise ValueError("cpu values must lie in [0, 100]")
        start, end = self.default_backup_start, self.default_backup_end
        if not (0 <= start < end):
            raise ValueError("default backup window must satisfy 0 <= start < end")
        if (end - start) > MINUTES_PER_DAY or (start % MINUTES_PER_DAY) + (end - start) > MINUTES_PER_DAY:
            raise ValueError("default backup window must fit inside one UTC day")
        ts.flags.writeable = False
        cpu.flags.writeable = False
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "cpu", cpu)

    @property
    def n_samples(self) -> int:
        return len(self.timestamps)

    @property
    def first_day(self) -> date:
        return minute_to_day(int(self.timestamps[0]))

    @property
    def last_day(self) -> date:
        return minute_to_day(int(self.timestamps[-1]))

    def samples(self) -> Iterator[LoadSample]:
        for t, v in zip(self.timestamps, self.cpu):
            yield LoadSample(int(t), float(v))


@dataclass(frozen=True)
class DaySlice:
    """One server-day as a dense 288-slot vector; NaN marks absent slots."""

    server_id: str
    day: date
    slots: np.ndarray

    def __post_init__(self):
        slots = np.array(self.slots, dtype=np.float64)
        if slots.shape != (SLOTS_PER_DAY,):
            raise ValueError(f"slots must have shape ({SLOTS_PER_DAY},)")
        with np.errstate(invalid="ignore"):
            if np.any(slots < 0.0) or np.any(slots > 100.0):
                raise ValueError("cpu values must lie in [0, 100]")
        slots.flags.writeable = False
        object.__setattr__(self, "slots", slots)

    @property
    def present_mask(self) -> np.ndarray:
        return ~np.isnan(self.slots)

    @property
    def present_count(self) -> int:
        return int(np.count_nonzero(self.present_mask))


def slice_day(series: LoadSeries, day: date) -> DaySlice:
    """Project one UTC day of a series onto the 288-slot grid."""
    m0 = day_start_minute(day)
    lo = int(np.searchsorted(series.timestamps, m0, side="left"))
    hi = int(np.searchsorted(series.timestamps, m0 + MINUTES_PER_DAY, side="left"))
    slots = np.full(SLOTS_PER_DAY, np.nan)
    idx = (series.timestamps[lo:hi] - m0) // SLOT_MINUTES
    slots[idx] = series.cpu[lo:hi]
    return DaySlice(series.server_id, day, slots)


def day_matrix(series: LoadSeries, start_day: date, n_days: int) -> np.ndarray:
    """Dense (n_days, 288) view of a series; NaN marks absent slots."""
    if n_days < 1:
        raise ValueError("n_days must be >= 1")
    m0 = day_start_minute(start_day)
    lo = int(np.searchsorted(series.timestamps, m0, side="left"))
    hi = int(np.searchsorted(series.timestamps, m0 + n_days * MINUTES_PER_DAY, side="left"))
    mat = np.full(n_days * SLOTS_PER_DAY, np.nan)
    idx = (series.timestamps[lo:hi] - m0) // SLOT_MINUTES
    mat[idx] = series.cpu[lo:hi]
    return mat.reshape(n_days, SLOTS_PER_DAY)


def coverage(day: DaySlice) -> float:
    """Fraction of the day's 288 slots that carry a sample."""
    return day.present_count / SLOTS_PER_DAY


# ---------------------------------------------------------------------------
# Schema model and validation reporting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ColumnSpec:
    """Expected shape of one CSV column.

    ``kind`` is one of ``"string" | "int" | "float"``.  Bounds and the
    5-minute alignment constraint apply to numeric kinds only.
    """

    name: str
    kind: str
    min_value: float | None = None
    max_value: float | None = None
    multiple_of: int | None = None

    def __post_init__(self):
        if self.kind not in ("string", "int", "float"):
            raise ValueError(f"unknown column kind {self.kind!r}")


@dataclass(frozen=True)
class SchemaSpec:
    """Ordered column expectations plus optional strict a < b row rules."""

    columns: tuple[ColumnSpec, ...]
    ordered_pairs: tuple[tuple[str, str], ...] = ()

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.columns)

    def column(self, name: str) -> ColumnSpec:
        for c in self.columns:
            if c.name == name:
                return c
        raise KeyError(name)


@dataclass(frozen=True)
class Anomaly:
    """One validation finding.

    ``row`` is the 1-based data row number (the row right after the header
    is row 1); header-level findings use row 0.  ``kind`` is ``schema`` for
    structural/type faults, ``bound`` for out-of-range or misaligned values,
    ``gap`` for missing 5-minute slots inside a server's span.
    """

    kind: str
    row: int
    message: str

    def to_json_dict(self) -> dict:
        return {"kind": self.kind, "row": self.row, "message": self.message}


_FAILING_KINDS = frozenset({"schema", "bound"})


@dataclass(frozen=True)
class ValidationReport:
    verdict: str
    anomalies: tuple[Anomaly, ...]

    @classmethod
    def from_anomalies(cls, anomalies: Iterable[Anomaly]) -> "ValidationReport":
        anoms = tuple(anomalies)
        verdict = "fail" if any(a.kind in _FAILING_KINDS for a in anoms) else "pass"
        return cls(verdict, anoms)

    @property
    def ok(self) -> bool:
        return self.verdict == "pass"

    def to_json_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "anomalies": [a.to_json_dict() for a in self.anomalies],
        }


def telemetry_schema() -> SchemaSpec:
    """Canonical schema for telemetry CSV files."""
    return SchemaSpec(
        columns=(
            ColumnSpec("server_id", "string"),
            ColumnSpec("timestamp_min", "int", min_value=0, multiple_of=SLOT_MINUTES),
            ColumnSpec("avg_cpu_pct", "float", min_value=0.0, max_value=100.0),
            ColumnSpec("default_backup_start_min", "int", min_value=0),
            ColumnSpec("default_backup_end_min", "int", min_value=0),
        ),
        ordered_pairs=(("default_backup_start_min", "default_backup_end_min"),),
    )


_INT_RE = r"[+-]?\d+"


def infer_schema(path) -> SchemaSpec:
    """Derive a SchemaSpec from a CSV file: names from the header, kinds by
    the narrowest type every value fits, bounds from observed min/max.

    Raises TelemetryParseError when the file has no data rows.  By
    construction ``validate(path, infer_schema(path))`` passes.
    """
    df = pd.read_csv(path, dtype=str, encoding="utf-8-sig", keep_default_na=False)
    if df.empty:
        raise TelemetryParseError("cannot infer a schema from a file with no data rows")
    cols = []
    for name in df.columns:
        values = df[name]
        if values.str.fullmatch(_INT_RE).all():
            as_num = pd.to_numeric(values)
            cols.append(ColumnSpec(name, "int", float(as_num.min()), float(as_num.max())))
            continue
        as_num = pd.to_numeric(values, errors="coerce")
        if not as_num.isna().any():
            cols.append(ColumnSpec(name, "float", float(as_num.min()), float(as_num.max())))
        else:
            cols.append(ColumnSpec(name, "string"))
    return SchemaSpec(columns=tuple(cols))


def _read_header(path) -> list[str]:
    with open(path, "r", encoding="utf-8-sig", newline="") as fh:
        line = fh.readline()
    if not line:
        raise TelemetryParseError("empty file: no header row")
    return next(csv.reader(io.StringIO(line)))


def _scan_rows(path, spec: SchemaSpec) -> list[Anomaly]:
    """Row-by-row scan used when a vectorized read is impossible.  Reports
    every field-count, type, and bound violation exactly once."""
    anomalies: list[Anomaly] = []
    ncols = len(spec.columns)
    pair_idx = [
        (spec.names.index(a), spec.names.index(b))
        for a, b in spec.ordered_pairs
        if a in spec.names and b in spec.names
    ]
    with open(path, "r", encoding="utf-8-sig", newline="") as fh:
        reader = csv.reader(fh)
        next(reader, None)
        for row_no, fields in enumerate(reader, start=1):
            if len(fields) != ncols:
                anomalies.append(
                    Anomaly("schema", row_no, f"expected {ncols} fields, got {len(fields)}")
                )
                continue
            parsed: list[float | None] = [None] * ncols
            for i, col in enumerate(spec.columns):
                text = fields[i]
                if col.kind == "string":
                    if text == "":
                        anomalies.append(
                            Anomaly("schema", row_no, f"{col.name}: empty value")
                        )
                    continue
                try:
                    value = int(text) if col.kind == "int" else float(text)
                except ValueError:
                    anomalies.append(
                        Anomaly("schema", row_no, f"{col.name}: {text!r} is not {col.kind}")
                    )
                    continue
                parsed[i] = value
                if col.min_value is not None and value < col.min_value:
                    anomalies.append(
                        Anomaly("bound", row_no, f"{col.name}={text} below minimum {col.min_value:g}")
                    )
                elif col.max_value is not None and value > col.max_value:
                    anomalies.append(
                        Anomaly("bound", row_no, f"{col.name}={text} above maximum {col.max_value:g}")
                    )
                if col.multiple_of is not None and value % col.multiple_of != 0:
                    anomalies.append(
                        Anomaly("bound", row_no, f"{col.name}={text} is not a multiple of {col.multiple_of}")
                    )
            for ia, ib in pair_idx:
                va, vb = parsed[ia], parsed[ib]
                if va is not None and vb is not None and va >= vb:
                    anomalies.append(
                        Anomaly(
                            "bound",
                            row_no,
                            f"{spec.names[ia]}={fields[ia]} must be less than {spec.names[ib]}={fields[ib]}",
                        )
                    )
    return anomalies


def _typed_frame(path, spec: SchemaSpec) -> pd.DataFrame:
    """Vectorized CSV read with dtypes taken from the spec.  Raises the
    underlying pandas error when any cell refuses its dtype."""
    dtypes: dict[str, object] = {}
    for col in spec.columns:
        if col.kind == "int":
            dtypes[col.name] = np.int64
        elif col.kind == "float":
            dtypes[col.name] = np.float64
        else:
            dtypes[col.name] = "category"
    return pd.read_csv(path, dtype=dtypes, encoding="utf-8-sig")


def _frame_anomalies(df: pd.DataFrame, spec: SchemaSpec) -> list[Anomaly]:
    """Vectorized bound/alignment checks over a successfully typed frame."""
    anomalies: list[Anomaly] = []

    def flag(mask: np.ndarray, kind: str, fmt) -> None:
        for i in np.flatnonzero(mask):
            anomalies.append(Anomaly(kind, int(i) + 1, fmt(i)))

    for col in spec.columns:
        if col.kind == "string":
            codes = df[col.name].cat.codes.to_numpy()
            flag(codes < 0, "schema", lambda i, c=col: f"{c.name}: empty value")
            continue
        vals = df[col.name].to_numpy()
        if col.kind == "float":
            nan = np.isnan(vals)
            flag(nan, "schema", lambda i, c=col: f"{c.name}: empty value")
        else:
            nan = np.zeros(len(vals), dtype=bool)
        with np.errstate(invalid="ignore"):
            if col.min_value is not None:
                flag(
                    (vals < col.min_value) & ~nan,
                    "bound",
                    lambda i, c=col, v=vals: f"{c.name}={v[i]:g} below minimum {c.min_value:g}",
                )
            if col.max_value is not None:
                flag(
                    (vals > col.max_value) & ~nan,
                    "bound",
                    lambda i, c=col, v=vals: f"{c.name}={v[i]:g} above maximum {c.max_value:g}",
                )
            if col.multiple_of is not None:
                flag(
                    (vals % col.multiple_of != 0) & ~nan,
                    "bound",
                    lambda i, c=col, v=vals: f"{c.name}={v[i]:g} is not a multiple of {c.multiple_of}",
                )
    for a, b in spec.ordered_pairs:
        if a in df.columns and b in df.columns:
            va = df[a].to_numpy()
            vb = df[b].to_numpy()
            flag(
                va >= vb,
                "bound",
                lambda i: f"{a}={va[i]:g} must be less than {b}={vb[i]:g}",
            )
    return anomalies


def _gap_anomalies(df: pd.DataFrame) -> list[Anomaly]:
    """Per-server missing-slot findings; informational, never fail a run."""
    ids = df["server_id"]
    codes = ids.cat.codes.to_numpy() if isinstance(ids.dtype, pd.CategoricalDtype) else pd.factorize(ids)[0]
    ts = df["timestamp_min"].to_numpy()
    order = np.lexsort((ts, codes))
    sc, st = codes[order], ts[order]
    gap = (sc[1:] == sc[:-1]) & (st[1:] - st[:-1] > SLOT_MINUTES)
    out = []
    id_values = ids.cat.categories if isinstance(ids.dtype, pd.CategoricalDtype) else pd.unique(ids)
    for i in np.flatnonzero(gap):
        row = int(order[i + 1]) + 1
        sid = id_values[sc[i]]
        out.append(
            Anomaly("gap", row, f"server {sid}: no samples in ({int(st[i])}, {int(st[i + 1])})")
        )
    return out


def validate(path, spec: SchemaSpec) -> ValidationReport:
    """Check a CSV file against a schema and report anomalies.

    Header mismatches and row-level field-count/type faults are ``schema``
    anomalies; out-of-range, misaligned, or misordered values are ``bound``
    anomalies; either kind fails the verdict.  Missing 5-minute slots are
    reported as ``gap`` anomalies but never fail the verdict, because absent
    slots are legal downstream.  Gap scanning applies only to inputs with
    the telemetry ``server_id``/``timestamp_min`` columns.
    """
    header = _read_header(path)
    if tuple(header) != spec.names:
        return ValidationReport.from_anomalies(
            [Anomaly("schema", 0, f"header mismatch: expected {list(spec.names)}, got {header}")]
        )
    try:
        df = _typed_frame(path, spec)
    except (ValueError, pd.errors.ParserError):
        return ValidationReport.from_anomalies(_scan_rows(path, spec))
    anomalies = _frame_anomalies(df, spec)
    if not any(a.kind in _FAILING_KINDS for a in anomalies) and {"server_id", "timestamp_min"} <= set(df.columns):
        anomalies.extend(_gap_anomalies(df))
    anomalies.sort(key=lambda a: (a.row, a.kind, a.message))
    return ValidationReport.from_anomalies(anomalies)


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

def _first_failing_row(path, spec: SchemaSpec) -> Anomaly | None:
    for anomaly in _scan_rows(path, spec):
        if anomaly.kind in _FAILING_KINDS:
            return anomaly
    return None


def _strict_frame(path) -> pd.DataFrame:
    """Typed read of a telemetry CSV; raises TelemetryParseError pointing at
    the first offending row when the file is structurally unusable."""
    spec = telemetry_schema()
    header = _read_header(path)
    if tuple(header) != COLUMNS:
        raise TelemetryParseError(f"header mismatch: expected {list(COLUMNS)}, got {header}")
    try:
        return pd.read_csv(path, dtype=_DTYPES, encoding="utf-8-sig")
    except (ValueError, pd.errors.ParserError) as exc:
        found = _first_failing_row(path, spec)
        if found is not None:
            raise TelemetryParseError(found.message, row=found.row) from exc
        raise TelemetryParseError(f"unreadable telemetry file: {exc}") from exc


def _parse_frame(df: pd.DataFrame) -> list[LoadSeries]:
    """Turn a typed telemetry frame into per-server series, sorted by id."""
    if df.empty:
        return []
    raw_codes = df["server_id"].cat.codes.to_numpy()
    categories = np.asarray(df["server_id"].cat.categories, dtype=object)
    if np.any(raw_codes < 0):
        row = int(np.flatnonzero(raw_codes < 0)[0]) + 1
        raise TelemetryParseError("server_id: empty value", row=row)

    # Re-rank category codes so that ascending code order is lexicographic.
    rank = np.empty(len(categories), dtype=np.int64)
    rank[np.argsort(categories)] = np.arange(len(categories))
    codes = rank[raw_codes]
    ids_sorted = categories[np.argsort(categories)]

    ts = df["timestamp_min"].to_numpy()
    cpu = df["avg_cpu_pct"].to_numpy()
    starts = df["default_backup_start_min"].to_numpy()
    ends = df["default_backup_end_min"].to_numpy()

    for name, mask in (
        ("timestamp_min", (ts < 0) | (ts % SLOT_MINUTES != 0)),
        ("avg_cpu_pct", np.isnan(cpu) | (cpu < 0.0) | (cpu > 100.0)),
        ("default_backup_start_min", starts < 0),
    ):
        if np.any(mask):
            i = int(np.flatnonzero(mask)[0])
            raise TelemetryParseError(f"{name}: value {df[name].iloc[i]} out of range", row=i + 1)
    bad_window = starts >= ends
    if np.any(bad_window):
        i = int(np.flatnonzero(bad_window)[0])
        raise TelemetryParseError(
            f"default backup window is empty ({starts[i]} >= {ends[i]})", row=i + 1
        )

    order = np.lexsort((ts, codes))
    sc = codes[order]
    st = ts[order]
    dup = (sc[1:] == sc[:-1]) & (st[1:] == st[:-1])
    if np.any(dup):
        i = int(np.flatnonzero(dup)[0])
        raise TelemetryParseError(
            f"duplicate sample for server {ids_sorted[sc[i]]} at timestamp {int(st[i])}",
            row=int(order[i + 1]) + 1,
        )

    change = np.flatnonzero(sc[1:] != sc[:-1]) + 1
    block_starts = np.concatenate(([0], change))
    block_ends = np.concatenate((change, [len(sc)]))

    s_sorted = starts[order]
    e_sorted = ends[order]
    firsts = np.repeat(s_sorted[block_starts], block_ends - block_starts)
    firsts_e = np.repeat(e_sorted[block_starts], block_ends - block_starts)
    mismatch = (s_sorted != firsts) | (e_sorted != firsts_e)
    if np.any(mismatch):
        i = int(np.flatnonzero(mismatch)[0])
        raise TelemetryParseError(
            f"server {ids_sorted[sc[i]]} carries conflicting default backup windows",
            row=int(order[i]) + 1,
        )

    cpu_sorted = cpu[order]
    out: list[LoadSeries] = []
    for b0, b1 in zip(block_starts, block_ends):
        try:
            out.append(
                LoadSeries(
                    server_id=str(ids_sorted[sc[b0]]),
                    timestamps=st[b0:b1],
                    cpu=cpu_sorted[b0:b1],
                    default_backup_start=int(s_sorted[b0]),
                    default_backup_end=int(e_sorted[b0]),
                )
            )
        except ValueError as exc:
            raise TelemetryParseError(f"server {ids_sorted[sc[b0]]}: {exc}", row=int(order[b0]) + 1) from exc
    return out


def parse_telemetry(path) -> list[LoadSeries]:
    """Parse a telemetry CSV into one LoadSeries per server, sorted by
    server_id.  Structural faults (bad header, malformed or out-of-range
    rows, duplicate samples, conflicting per-server defaults) raise
    TelemetryParseError naming the offending data row.
    """
    return _parse_frame(_strict_frame(path))


def write_telemetry(series: Iterable[LoadSeries], path, mode: str = "w") -> None:
    """Write series back to telemetry CSV, inverse of parse_telemetry.
    ``mode="a"`` appends without a header for incremental writers."""
    frames = []
    for s in series:
        frames.append(
            pd.DataFrame(
                {
                    "server_id": np.repeat(s.server_id, s.n_samples),
                    "timestamp_min": s.timestamps,
                    "avg_cpu_pct": s.cpu,
                    "default_backup_start_min": np.repeat(s.default_backup_start, s.n_samples),
                    "default_backup_end_min": np.repeat(s.default_backup_end, s.n_samples),
                }
            )
        )
    if not frames:
        if mode == "w":
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(",".join(COLUMNS) + "\n")
        return
    df = pd.concat(frames, ignore_index=True)
    df.to_csv(path, index=False, mode=mode, header=(mode == "w"), lineterminator="\n")

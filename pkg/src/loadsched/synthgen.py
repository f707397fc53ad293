"""Synthetic fleet generator with known ground-truth classes.

Each server is built from a class-specific template plus bounded uniform
noise.  Two independent noise draws in [-a, +a] can differ by up to 2a, so
with the default amplitude a=2.0 any day-over-day replication of a template
deviates by at most 4 CPU points (plus 0.01 rounding slack), comfortably
inside the +10/-5 accuracy band; pattern templates separate their levels by
at least 30 points so the wrong class never fits.  Every generated day has
full 288-slot coverage.

Templates:

* stable        - flat plateau, with a low "valley" carved out so an LL
                  window has a unique right answer
* daily pattern - low half-day then high half-day (gap >= 30), valley in
                  the low half, identical every day
* weekly pattern- one plateau level per weekday (adjacent and wraparound
                  gaps >= 30), identical across weeks
* no pattern    - reflected random walk across all slots
* short-lived   - stable-shaped but only the trailing ``short_lived_days``
                  days of history exist

Generation is a pure function of the config (seed included): the same
config yields byte-identical CSV output.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import date, timedelta
from typing import Mapping

import numpy as np

from .classify import ServerClass
from .telemetry import (
    MINUTES_PER_DAY,
    SLOT_MINUTES,
    SLOTS_PER_DAY,
    LoadSeries,
    day_start_minute,
    write_telemetry,
)

__all__ = [
    "ValleySpec",
    "FleetConfig",
    "GeneratedFleet",
    "generate_fleet",
    "write_fleet",
]

# Assignment order of class blocks; also the tie-break order when rounding
# the mix to whole servers.
_CLASS_ORDER = (
    ServerClass.STABLE,
    ServerClass.DAILY_PATTERN,
    ServerClass.WEEKLY_PATTERN,
    ServerClass.NO_PATTERN,
    ServerClass.SHORT_LIVED,
)

# Weekday plateau offsets for the weekly template: adjacent days (and the
# Sunday->Monday wraparound) differ by at least 30 points.
_WEEKLY_OFFSETS = np.array([0.0, 30.0, 0.0, 30.0, 0.0, 30.0, 60.0])

_RAMP_SLOTS = 3
_DEFAULT_WINDOW_MIN = 60


@dataclass(frozen=True)
class ValleySpec:
    """Shape of the carved low-load valley: a flat bottom ``width_slots``
    wide, ``depth`` points below the surrounding plateau, with short linear
    ramps on both sides.  ``jitter_slots`` shifts the valley start by a
    random amount per day (0 keeps days identical)."""

    depth: float = 30.0
    width_slots: int = 12
    jitter_slots: int = 0

    def __post_init__(self):
        if self.depth <= 0:
            raise ValueError("valley depth must be positive")
        if self.width_slots < 1:
            raise ValueError("valley width must be at least one slot")
        if self.jitter_slots < 0:
            raise ValueError("jitter must be >= 0")


@dataclass(frozen=True)
class FleetConfig:
    """Everything the generator needs; a fleet is a pure function of this.

    ``mix`` maps class to fraction and must sum to 1.  ``trailing_actual_days``
    additionally generates that many days after the history window (the
    ground truth a backup day will face).  ``default_on_peak_fraction``
    plants that share of each patterned class's declared default windows on
    the plateau instead of the valley, giving the impact report something
    to improve on."""

    server_count: int
    mix: Mapping[ServerClass, float]
    weeks: int = 4
    noise_amplitude: float = 2.0
    valley: ValleySpec = field(default_factory=ValleySpec)
    seed: int = 0
    start_day: date = date(1970, 1, 5)
    short_lived_days: int = 10
    default_on_peak_fraction: float = 0.0
    trailing_actual_days: int = 0

    def __post_init__(self):
        if self.server_count < 1:
            raise ValueError("server_count must be >= 1")
        if self.weeks < 1:
            raise ValueError("weeks must be >= 1")
        mix = {ServerClass(k) if not isinstance(k, ServerClass) else k: float(v)
               for k, v in dict(self.mix).items()}
        if any(v < 0 for v in mix.values()):
            raise ValueError("mix fractions must be non-negative")
        if abs(sum(mix.values()) - 1.0) > 1e-9:
            raise ValueError("mix fractions must sum to 1")
        if mix.get(ServerClass.WEEKLY_PATTERN, 0.0) > 0 and self.weeks < 2:
            raise ValueError("a weekly pattern cannot exist in under 2 weeks of history")
        if not (1 <= self.short_lived_days <= 20):
            raise ValueError("short_lived_days must lie in [1, 20]")
        if self.short_lived_days > self.weeks * 7:
            raise ValueError("short_lived_days cannot exceed the history span")
        if not (0.0 <= self.noise_amplitude <= 5.0):
            raise ValueError("noise_amplitude must lie in [0, 5]")
        if not (0.0 <= self.default_on_peak_fraction <= 1.0):
            raise ValueError("default_on_peak_fraction must lie in [0, 1]")
        if self.trailing_actual_days < 0:
            raise ValueError("trailing_actual_days must be >= 0")
        object.__setattr__(self, "mix", mix)

    @classmethod
    def from_json_dict(cls, data: dict) -> "FleetConfig":
        known = dict(data)
        mix = {ServerClass(k): float(v) for k, v in known.pop("mix").items()}
        if "valley" in known:
            known["valley"] = ValleySpec(**known["valley"])
        if "start_day" in known:
            known["start_day"] = date.fromisoformat(known["start_day"])
        return cls(mix=mix, **known)

    def to_json_dict(self) -> dict:
        return {
            "server_count": self.server_count,
            "mix": {k.value: v for k, v in self.mix.items()},
            "weeks": self.weeks,
            "noise_amplitude": self.noise_amplitude,
            "valley": {
                "depth": self.valley.depth,
                "width_slots": self.valley.width_slots,
                "jitter_slots": self.valley.jitter_slots,
            },
            "seed": self.seed,
            "start_day": self.start_day.isoformat(),
            "short_lived_days": self.short_lived_days,
            "default_on_peak_fraction": self.default_on_peak_fraction,
            "trailing_actual_days": self.trailing_actual_days,
        }


@dataclass
class GeneratedFleet:
    """History series, optional backup-day actual series, and the label
    each server was generated to satisfy."""

    history: list[LoadSeries]
    actuals: list[LoadSeries]
    labels: dict[str, ServerClass]
    config: FleetConfig


def _mix_counts(config: FleetConfig) -> dict[ServerClass, int]:
    """Largest-remainder rounding so counts sum exactly to server_count."""
    n = config.server_count
    exact = {cls: config.mix.get(cls, 0.0) * n for cls in _CLASS_ORDER}
    counts = {cls: int(np.floor(v)) for cls, v in exact.items()}
    leftover = n - sum(counts.values())
    by_remainder = sorted(
        _CLASS_ORDER,
        key=lambda cls: exact[cls] - counts[cls],
        reverse=True,
    )
    for cls in by_remainder[:leftover]:
        counts[cls] += 1
    return counts


def _carve_valley(mat: np.ndarray, starts: np.ndarray, valley: ValleySpec) -> None:
    """Cut the valley into each day row; ``starts`` is the per-day start
    slot of the flat bottom."""
    w = valley.width_slots
    for i in range(mat.shape[0]):
        v0 = int(starts[i])
        level = float(mat[i, v0])
        bottom = max(level - valley.depth, 1.0)
        mat[i, v0:v0 + w] = bottom
        for j in range(_RAMP_SLOTS):
            frac = (j + 1) / (_RAMP_SLOTS + 1)
            mat[i, v0 - _RAMP_SLOTS + j] = level - (level - bottom) * (frac)
            mat[i, v0 + w + _RAMP_SLOTS - 1 - j] = level - (level - bottom) * (frac)


def _fold(x: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Reflect values into [lo, hi] (triangle-wave folding)."""
    span = hi - lo
    y = np.mod(x - lo, 2.0 * span)
    return lo + np.where(y > span, 2.0 * span - y, y)


def _valley_starts(rng: np.random.Generator, n_days: int, v0: int, valley: ValleySpec,
                   lo: int, hi: int) -> np.ndarray:
    if valley.jitter_slots == 0:
        return np.full(n_days, v0)
    jitter = rng.integers(-valley.jitter_slots, valley.jitter_slots + 1, size=n_days)
    return np.clip(v0 + jitter, lo, hi)


def _template(cls: ServerClass, rng: np.random.Generator, config: FleetConfig,
              first_day: date, n_days: int) -> tuple[np.ndarray, int | None]:
    """(n_days, 288) noiseless template and the valley start slot, if any."""
    valley = config.valley
    w = valley.width_slots
    margin = _RAMP_SLOTS + 1

    if cls in (ServerClass.STABLE, ServerClass.SHORT_LIVED):
        base = rng.uniform(25.0, 55.0)
        lo, hi = margin + 32, SLOTS_PER_DAY - w - margin - 32
        v0 = int(rng.integers(lo, hi + 1))
        mat = np.full((n_days, SLOTS_PER_DAY), base)
        _carve_valley(mat, _valley_starts(rng, n_days, v0, valley, lo, hi), valley)
        return mat, v0

    if cls is ServerClass.DAILY_PATTERN:
        low = rng.uniform(25.0, 50.0)
        high = low + rng.uniform(30.0, 35.0)
        lo, hi = margin + 32, SLOTS_PER_DAY // 2 - w - margin - 8
        v0 = int(rng.integers(lo, hi + 1))
        day = np.full(SLOTS_PER_DAY, low)
        day[SLOTS_PER_DAY // 2:] = high
        mat = np.tile(day, (n_days, 1))
        _carve_valley(mat, _valley_starts(rng, n_days, v0, valley, lo, hi), valley)
        return mat, v0

    if cls is ServerClass.WEEKLY_PATTERN:
        base = rng.uniform(15.0, 25.0)
        lo, hi = margin + 32, SLOTS_PER_DAY - w - margin - 32
        v0 = int(rng.integers(lo, hi + 1))
        weekdays = np.array([(first_day + timedelta(days=i)).weekday() for i in range(n_days)])
        levels = base + _WEEKLY_OFFSETS[weekdays]
        mat = np.repeat(levels[:, None], SLOTS_PER_DAY, axis=1)
        _carve_valley(mat, _valley_starts(rng, n_days, v0, valley, lo, hi), valley)
        return mat, v0

    # NO_PATTERN: reflected random walk over every slot of the span.
    start = rng.uniform(20.0, 80.0)
    steps = rng.uniform(-8.0, 8.0, size=n_days * SLOTS_PER_DAY)
    path = start + np.cumsum(steps)
    return _fold(path, 2.0, 98.0).reshape(n_days, SLOTS_PER_DAY), None


def _default_slot(cls: ServerClass, rng: np.random.Generator, v0: int | None,
                  width: int, on_peak: bool) -> int:
    """Start slot for the declared default window: the valley itself, a
    far-away plateau slot when planted on-peak, or anywhere for pattern-free
    servers."""
    max_start = SLOTS_PER_DAY - _DEFAULT_WINDOW_MIN // SLOT_MINUTES
    if v0 is None:
        return int(rng.integers(0, max_start + 1))
    if on_peak:
        return (v0 + SLOTS_PER_DAY // 2) % max_start
    return v0


def generate_fleet(config: FleetConfig) -> GeneratedFleet:
    """Build the fleet in memory.  Servers are named srv-00000, srv-00001,
    ... in class-block order (stable, daily, weekly, no-pattern,
    short-lived), which is also lexicographic id order."""
    counts = _mix_counts(config)
    rng = np.random.default_rng(config.seed)
    hist_days = config.weeks * 7
    trailing = config.trailing_actual_days
    amp = config.noise_amplitude

    history: list[LoadSeries] = []
    actuals: list[LoadSeries] = []
    labels: dict[str, ServerClass] = {}
    idx = 0
    for cls in _CLASS_ORDER:
        n_cls = counts[cls]
        n_planted = int(round(config.default_on_peak_fraction * n_cls))
        for k in range(n_cls):
            sid = f"srv-{idx:05d}"
            idx += 1
            if cls is ServerClass.SHORT_LIVED:
                n_hist = config.short_lived_days
                first_day = config.start_day + timedelta(days=hist_days - n_hist)
            else:
                n_hist = hist_days
                first_day = config.start_day
            n_total = n_hist + trailing

            mat, v0 = _template(cls, rng, config, first_day, n_total)
            if amp > 0:
                mat = mat + rng.uniform(-amp, amp, size=mat.shape)
            vals = np.clip(np.round(mat, 2), 0.0, 100.0).ravel()

            slot0 = _default_slot(cls, rng, v0, config.valley.width_slots, k < n_planted)
            d_start = day_start_minute(first_day) + slot0 * SLOT_MINUTES
            d_end = d_start + _DEFAULT_WINDOW_MIN

            m0 = day_start_minute(first_day)
            ts = m0 + SLOT_MINUTES * np.arange(n_total * SLOTS_PER_DAY, dtype=np.int64)
            n_hist_samples = n_hist * SLOTS_PER_DAY
            history.append(
                LoadSeries(sid, ts[:n_hist_samples], vals[:n_hist_samples], d_start, d_end)
            )
            if trailing:
                actuals.append(
                    LoadSeries(sid, ts[n_hist_samples:], vals[n_hist_samples:], d_start, d_end)
                )
            labels[sid] = cls
    return GeneratedFleet(history, actuals, labels, config)


def write_fleet(
    fleet: GeneratedFleet,
    csv_path,
    labels_path=None,
    actuals_path=None,
    batch_servers: int = 200,
) -> None:
    """Write the fleet as telemetry CSV (batched to keep memory flat), plus
    optional ground-truth labels JSON and backup-day actuals CSV."""
    import json

    def write_batched(series_list, path):
        for i in range(0, max(len(series_list), 1), batch_servers):
            chunk = series_list[i:i + batch_servers]
            write_telemetry(chunk, path, mode="w" if i == 0 else "a")

    write_batched(fleet.history, csv_path)
    if labels_path is not None:
        with open(labels_path, "w", encoding="utf-8") as fh:
            json.dump({sid: cls.value for sid, cls in sorted(fleet.labels.items())}, fh, indent=2)
            fh.write("\n")
    if actuals_path is not None:
        write_batched(fleet.actuals, actuals_path)

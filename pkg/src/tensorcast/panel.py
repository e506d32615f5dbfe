"""Hourly panel ingestion, calendar folding, and per-cell standardization.

Raw inputs are CSV files in the hourly-load format (header row, a ``Datetime``
column with ``YYYY-MM-DD HH:MM:SS`` local timestamps, and one ``<PROVIDER>_MW``
value column per file). Ingestion aligns all providers on a common hourly grid,
averages duplicated clock hours (DST fall-back), linearly interpolates gaps of
at most six hours, and refuses providers with more than 5% missing hours.

Folding re-indexes the aligned panel as a sequence of (N, S1, ..., SM) tensors,
one per full calendar period, dropping partial periods at both ends. The
standardization estimators give each (provider, seasonal-cell) its own location
and scale so the factor model sees zero-mean, unit-variance inputs.
"""

from __future__ import annotations

import csv
import logging
import math
import io
import warnings
import zipfile
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Sequence

import numpy as np

logger = logging.getLogger(__name__)

# Reference Monday 00:00; hour indices are offsets from here.
_EPOCH = datetime(2001, 1, 1)
_HOURS_PER_WEEK = 168
_WEEKDAYS = ("monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday")

_MAX_INTERP_GAP = 6
_MAX_MISSING_FRACTION = 0.05
_MISSING_TOKENS = {"", "na", "nan", "null"}

__all__ = [
    "PanelSeries",
    "CalendarSpec",
    "TensorSeries",
    "Standardization",
    "ingest_csv",
    "fold",
    "unfold_panel",
    "estimate_standardization",
    "standardize",
    "destandardize",
    "save_tensor_series",
    "load_tensor_series",
    "write_npz",
]


@dataclass
class PanelSeries:
    """Aligned hourly panel: N providers on a common, gap-free hourly grid."""

    provider_ids: list[str]
    timestamps: np.ndarray  # datetime64[h], strictly increasing, hourly
    values: np.ndarray  # (N, num_hours), MW
    repairs: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.values.shape != (len(self.provider_ids), len(self.timestamps)):
            raise ValueError(
                f"values shape {self.values.shape} does not match "
                f"{len(self.provider_ids)} providers x {len(self.timestamps)} hours"
            )


@dataclass(frozen=True)
class CalendarSpec:
    """Seasonal periods (S1, ..., SM) and the anchor fixing index 0 of each.

    The seasonal index of an hour is its offset within the enclosing calendar
    period, decomposed mixed-radix with the last period varying fastest; for
    the default (7, 24) that is (day-of-week, hour-of-day) with weeks starting
    at ``week_start`` 00:00.
    """

    periods: tuple[int, ...] = (7, 24)
    week_start: str = "monday"

    def __post_init__(self):
        if not self.periods or any(int(s) < 2 for s in self.periods):
            raise ValueError(f"every seasonal period must be >= 2, got {self.periods}")
        object.__setattr__(self, "periods", tuple(int(s) for s in self.periods))
        if self.week_start.lower() not in _WEEKDAYS:
            raise ValueError(f"unknown week_start {self.week_start!r}")
        object.__setattr__(self, "week_start", self.week_start.lower())
        if _HOURS_PER_WEEK % self.period_hours != 0:
            raise ValueError(
                f"seasonal periods {self.periods} span {self.period_hours} hours, "
                "which does not tile a week"
            )

    @property
    def period_hours(self) -> int:
        return int(np.prod(self.periods))

    def period_offset(self, hour_index: int) -> int:
        """Offset of an hour (index from the reference Monday) within its period."""
        start_shift = 24 * _WEEKDAYS.index(self.week_start)
        return int((hour_index - start_shift) % self.period_hours)

    def seasonal_indices(self, hour_index: int) -> tuple[int, ...]:
        """Decompose the period offset into per-level indices (0-based)."""
        offset = self.period_offset(hour_index)
        out = []
        for extent in reversed(self.periods):
            out.append(offset % extent)
            offset //= extent
        return tuple(reversed(out))


@dataclass
class TensorSeries:
    """Folded panel: values[t] is the (N, S1, ..., SM) tensor of period t."""

    values: np.ndarray  # (T, N, S1, ..., SM)
    period_starts: np.ndarray  # datetime64[h], length T
    provider_ids: list[str]

    def __post_init__(self):
        if len(self.period_starts) != self.values.shape[0]:
            raise ValueError("one start timestamp per period required")
        if self.values.shape[1] != len(self.provider_ids):
            raise ValueError("values second axis must match provider count")

    @property
    def num_periods(self) -> int:
        return self.values.shape[0]

    @property
    def tensor_dims(self) -> tuple[int, ...]:
        return self.values.shape[1:]


@dataclass
class Standardization:
    """Per-cell location and scale, both shaped (N, S1, ..., SM)."""

    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        if self.mu.shape != self.sigma.shape:
            raise ValueError("mu and sigma must have identical shapes")
        if not np.all(self.sigma > 0):
            raise ValueError("sigma must be strictly positive")


def _hour_index(ts: datetime) -> int:
    delta = ts - _EPOCH
    hours, remainder = divmod(int(delta.total_seconds()), 3600)
    if remainder != 0:
        raise ValueError(f"timestamp {ts} is not on the hourly grid")
    return hours


def _hour_to_datetime64(hour_index: int) -> np.datetime64:
    return np.datetime64(_EPOCH + timedelta(hours=int(hour_index)), "h")


def _parse_file(path: str | Path) -> tuple[str, dict[int, tuple[float, int]], int]:
    """Read one provider CSV into {hour_index: (value_sum, count)}.

    Duplicated hours accumulate so the caller can average them; missing value
    tokens are skipped (they become gaps on the aligned grid).
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: file is empty") from None
        header = [h.strip() for h in header]
        if "Datetime" not in header:
            raise ValueError(f"{path}: no 'Datetime' column in header {header}")
        mw_cols = [i for i, h in enumerate(header) if h.endswith("_MW")]
        if len(mw_cols) != 1:
            raise ValueError(f"{path}: expected exactly one '<PROVIDER>_MW' column, got {header}")
        dt_col = header.index("Datetime")
        val_col = mw_cols[0]
        provider = header[val_col][: -len("_MW")]

        readings: dict[int, tuple[float, int]] = {}
        duplicates = 0
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                ts = datetime.fromisoformat(row[dt_col].strip())
                hour = _hour_index(ts)
            except (ValueError, IndexError) as exc:
                raise ValueError(f"{path}:{lineno}: bad timestamp: {exc}") from None
            raw = row[val_col].strip() if val_col < len(row) else ""
            if raw.lower() in _MISSING_TOKENS:
                continue
            try:
                value = float(raw)
            except ValueError:
                raise ValueError(f"{path}:{lineno}: bad value {raw!r}") from None
            if not math.isfinite(value):
                raise ValueError(f"{path}:{lineno}: non-finite value {raw!r}")
            if hour in readings:
                s, c = readings[hour]
                readings[hour] = (s + value, c + 1)
                duplicates += 1
            else:
                readings[hour] = (value, 1)
    if not readings:
        raise ValueError(f"{path}: no data rows")
    return provider, readings, duplicates


def _interpolate_gaps(row: np.ndarray, provider: str) -> int:
    """Fill interior NaN runs of length <= 6 in place; error on longer runs."""
    missing = np.isnan(row)
    if not missing.any():
        return 0
    idx = np.flatnonzero(missing)
    filled = 0
    run_start = idx[0]
    prev = idx[0]
    runs = []
    for i in idx[1:]:
        if i != prev + 1:
            runs.append((run_start, prev))
            run_start = i
        prev = i
    runs.append((run_start, prev))
    for lo, hi in runs:
        length = hi - lo + 1
        if length > _MAX_INTERP_GAP:
            raise ValueError(
                f"provider {provider}: {length}-hour gap at offset {lo} exceeds "
                f"the {_MAX_INTERP_GAP}-hour interpolation limit"
            )
        left, right = row[lo - 1], row[hi + 1]
        row[lo : hi + 1] = left + (right - left) * np.arange(1, length + 1) / (length + 1)
        filled += length
    return filled


def ingest_csv(
    paths: Sequence[str | Path],
    span: tuple[datetime | str, datetime | str] | None = None,
) -> PanelSeries:
    """Parse provider CSVs and align them on a common hourly grid.

    The grid covers the intersection of the providers' spans unless ``span``
    gives explicit (inclusive) endpoints. Duplicated hours are averaged, edge
    hours missing for some provider are trimmed, interior gaps of at most six
    hours are linearly interpolated, and a provider missing more than 5% of
    the span is a hard error. Repair counts are logged and attached to the
    result's ``repairs`` mapping.
    """
    if not paths:
        raise ValueError("no input files given")
    parsed = [_parse_file(p) for p in paths]
    seen: dict[str, Path] = {}
    for (provider, _, _), path in zip(parsed, paths):
        if provider in seen:
            raise ValueError(f"provider {provider} appears in both {seen[provider]} and {path}")
        seen[provider] = Path(path)
    # Deterministic merge order regardless of how paths were listed.
    parsed.sort(key=lambda item: item[0])

    if span is not None:
        lo, hi = span
        if isinstance(lo, str):
            lo = datetime.fromisoformat(lo)
        if isinstance(hi, str):
            hi = datetime.fromisoformat(hi)
        first, last = _hour_index(lo), _hour_index(hi)
    else:
        first = max(min(readings) for _, readings, _ in parsed)
        last = min(max(readings) for _, readings, _ in parsed)
    if first > last:
        raise ValueError("providers have no overlapping hours (empty span)")

    num_hours = last - first + 1
    values = np.full((len(parsed), num_hours), np.nan)
    duplicates_averaged = 0
    for i, (_, readings, dups) in enumerate(parsed):
        duplicates_averaged += dups
        for hour, (total, count) in readings.items():
            if first <= hour <= last:
                values[i, hour - first] = total / count

    # Trim rows of the grid that some provider does not reach at the edges.
    present = ~np.isnan(values)
    if not present.any(axis=1).all():
        empty = [parsed[i][0] for i in np.flatnonzero(~present.any(axis=1))]
        raise ValueError(f"providers {empty} have no data in the requested span")
    first_valid = int(np.max([np.argmax(row) for row in present]))
    last_valid = int(np.min([len(row) - 1 - np.argmax(row[::-1]) for row in present]))
    edge_hours_dropped = (num_hours - (last_valid - first_valid + 1)) * len(parsed)
    values = values[:, first_valid : last_valid + 1]
    first += first_valid
    num_hours = values.shape[1]

    gaps_interpolated = 0
    for i, (provider, _, _) in enumerate(parsed):
        n_missing = int(np.isnan(values[i]).sum())
        if n_missing > _MAX_MISSING_FRACTION * num_hours:
            raise ValueError(
                f"provider {provider}: {n_missing}/{num_hours} hours missing "
                f"({100 * n_missing / num_hours:.1f}% > {100 * _MAX_MISSING_FRACTION:.0f}%)"
            )
        gaps_interpolated += _interpolate_gaps(values[i], provider)

    repairs = {
        "duplicates_averaged": duplicates_averaged,
        "gaps_interpolated": gaps_interpolated,
        "edge_hours_dropped": edge_hours_dropped,
    }
    logger.info(
        "ingested %d providers, %d hours; repairs: %s", len(parsed), num_hours, repairs
    )
    timestamps = _hour_to_datetime64(first) + np.arange(num_hours, dtype=np.int64).astype(
        "timedelta64[h]"
    )
    return PanelSeries(
        provider_ids=[p for p, _, _ in parsed],
        timestamps=timestamps,
        values=values,
        repairs=repairs,
    )


def _panel_hour_indices(panel: PanelSeries) -> np.ndarray:
    return (panel.timestamps - np.datetime64(_EPOCH, "h")).astype(np.int64)


def fold(panel: PanelSeries, cal: CalendarSpec) -> TensorSeries:
    """Fold the aligned panel into one (N, S1, ..., SM) tensor per full period.

    Partial periods at both ends are dropped. Within a period the hours fill
    the seasonal axes in order, last axis fastest, so for (7, 24) the entry at
    (i, s1, s2) is provider i at day s1, hour s2 of the period.
    """
    hours = _panel_hour_indices(panel)
    if len(hours) > 1 and not np.all(np.diff(hours) == 1):
        raise ValueError("panel timestamps must be consecutive hours")
    period = cal.period_hours
    lead = (-cal.period_offset(int(hours[0]))) % period
    num_periods = (len(hours) - lead) // period
    if num_periods < 1:
        raise ValueError(
            f"panel spans {len(hours)} hours; not one full {period}-hour period "
            "after dropping partial edges"
        )
    n = len(panel.provider_ids)
    kept = panel.values[:, lead : lead + num_periods * period]
    folded = kept.reshape(n, num_periods, *cal.periods).transpose(
        1, 0, *range(2, 2 + len(cal.periods))
    )
    starts = panel.timestamps[lead : lead + num_periods * period : period]
    return TensorSeries(
        values=np.ascontiguousarray(folded),
        period_starts=starts.copy(),
        provider_ids=list(panel.provider_ids),
    )


def unfold_panel(ts: TensorSeries) -> PanelSeries:
    """Inverse of :func:`fold` on the retained span."""
    num_periods, n = ts.values.shape[:2]
    period = int(np.prod(ts.tensor_dims[1:]))
    flat = ts.values.transpose(1, 0, *range(2, ts.values.ndim)).reshape(n, num_periods * period)
    start = ts.period_starts[0]
    timestamps = start + np.arange(num_periods * period, dtype=np.int64).astype("timedelta64[h]")
    return PanelSeries(
        provider_ids=list(ts.provider_ids),
        timestamps=timestamps,
        values=np.ascontiguousarray(flat),
    )


def cell_standardization(values: np.ndarray) -> Standardization:
    """Per-cell mean and standard deviation over the leading (period) axis.

    sigma is the square root of the average squared deviation; any cell whose
    sigma falls below the floor max(1e-8 |mu|, 1e-12) is clamped to the floor
    and counted in a warning.
    """
    if values.shape[0] < 2:
        raise ValueError(f"need at least 2 periods to estimate scale, got {values.shape[0]}")
    mu = values.mean(axis=0)
    sigma = np.sqrt(np.mean(np.square(values - mu), axis=0))
    floor = np.maximum(1e-8 * np.abs(mu), 1e-12)
    clamped = sigma < floor
    if clamped.any():
        sigma = np.where(clamped, floor, sigma)
        warnings.warn(
            f"{int(clamped.sum())} cells had near-zero scale; sigma clamped to floor",
            RuntimeWarning,
            stacklevel=2,
        )
    return Standardization(mu=mu, sigma=sigma)


def estimate_standardization(ts: TensorSeries) -> Standardization:
    """Per-cell standardization of a folded series; see cell_standardization."""
    return cell_standardization(ts.values)


def standardize(ts: TensorSeries, z: Standardization) -> TensorSeries:
    """Elementwise (y - mu) / sigma per cell."""
    if z.mu.shape != ts.tensor_dims:
        raise ValueError(f"standardization dims {z.mu.shape} != tensor dims {ts.tensor_dims}")
    return TensorSeries(
        values=(ts.values - z.mu) / z.sigma,
        period_starts=ts.period_starts.copy(),
        provider_ids=list(ts.provider_ids),
    )


def destandardize(ts: TensorSeries, z: Standardization) -> TensorSeries:
    """Elementwise mu + sigma * x per cell; inverse of :func:`standardize`."""
    if z.mu.shape != ts.tensor_dims:
        raise ValueError(f"standardization dims {z.mu.shape} != tensor dims {ts.tensor_dims}")
    return TensorSeries(
        values=z.mu + z.sigma * ts.values,
        period_starts=ts.period_starts.copy(),
        provider_ids=list(ts.provider_ids),
    )


def write_npz(path: str | Path, arrays: dict[str, np.ndarray]) -> None:
    """Write a standard .npz archive with byte-reproducible output.

    np.savez stamps each zip member with the wall clock, so two otherwise
    identical runs produce different files; here every member gets a fixed
    timestamp and members are written in the given key order.
    """
    with zipfile.ZipFile(path, "w", zipfile.ZIP_DEFLATED) as zf:
        for name, arr in arrays.items():
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.asarray(arr), allow_pickle=False)
            info = zipfile.ZipInfo(name + ".npy", date_time=(1980, 1, 1, 0, 0, 0))
            info.compress_type = zipfile.ZIP_DEFLATED
            zf.writestr(info, buf.getvalue())


def save_tensor_series(path: str | Path, ts: TensorSeries) -> None:
    """Write a folded-tensor archive (.npz): values, period starts, providers."""
    write_npz(
        path,
        {
            "values": ts.values,
            "period_starts": np.datetime_as_string(ts.period_starts, unit="h"),
            "provider_ids": np.array(ts.provider_ids),
        },
    )


def load_tensor_series(path: str | Path) -> TensorSeries:
    """Read an archive written by :func:`save_tensor_series`."""
    with np.load(path, allow_pickle=False) as archive:
        return TensorSeries(
            values=archive["values"],
            period_starts=archive["period_starts"].astype("datetime64[h]"),
            provider_ids=[str(p) for p in archive["provider_ids"]],
        )

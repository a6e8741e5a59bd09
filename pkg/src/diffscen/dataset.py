"""Hourly forecast/actual ingestion, normalization, day segmentation, split."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from datetime import datetime, timedelta

import numpy as np

__all__ = [
    "DataError",
    "HOURS_PER_DAY",
    "SOURCES",
    "DaySample",
    "Normalizer",
    "HourlySeries",
    "load_csv",
    "load_day_csv",
    "fit_normalizer",
    "make_days",
    "split",
    "load_dataset",
]

logger = logging.getLogger(__name__)

HOURS_PER_DAY = 24
SOURCES = ("pv", "wind")
SERIES_HEADER = ["timestamp", "forecast_mw", "actual_mw"]


class DataError(ValueError):
    """Malformed or inconsistent input data."""


@dataclass(frozen=True)
class DaySample:
    """One training day: normalized forecast condition and actual target."""

    date: str
    forecast: np.ndarray
    actual: np.ndarray
    source: str


@dataclass(frozen=True)
class Normalizer:
    """Affine map [vmin, vmax] -> [0, 1], fit on training rows only."""

    vmin: float
    vmax: float
    source: str = ""

    def __post_init__(self) -> None:
        if not (np.isfinite(self.vmin) and np.isfinite(self.vmax)):
            raise DataError("normalizer range must be finite")
        if self.vmax <= self.vmin:
            raise DataError(
                f"degenerate normalization range [{self.vmin}, {self.vmax}]")

    def normalize(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=np.float64)
        scaled = (values - self.vmin) / (self.vmax - self.vmin)
        n_outside = int(np.sum((scaled < 0.0) | (scaled > 1.0)))
        if n_outside:
            logger.warning(
                "%d value(s) outside the training range [%s, %s] clamped",
                n_outside, self.vmin, self.vmax)
        return np.clip(scaled, 0.0, 1.0)

    def denormalize(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=np.float64)
        return self.vmin + values * (self.vmax - self.vmin)


@dataclass(frozen=True)
class HourlySeries:
    timestamps: list[str]
    forecast: np.ndarray
    actual: np.ndarray
    source: str

    @property
    def n_days(self) -> int:
        return len(self.timestamps) // HOURS_PER_DAY


def _parse_timestamp(raw: str, row: int) -> datetime:
    try:
        return datetime.fromisoformat(raw.strip())
    except ValueError as exc:
        raise DataError(f"row {row}: bad timestamp {raw!r}") from exc


def _parse_power(raw: str, row: int, column: str) -> float:
    try:
        value = float(raw)
    except ValueError as exc:
        raise DataError(f"row {row}: non-numeric {column} {raw!r}") from exc
    if not np.isfinite(value):
        raise DataError(f"row {row}: missing or non-finite {column}")
    if value < 0.0:
        raise DataError(f"row {row}: negative {column} {value} (power is nonnegative)")
    return value


def _check_source(source: str) -> str:
    if source not in SOURCES:
        raise DataError(f"unknown source {source!r}, expected one of {SOURCES}")
    return source


def load_csv(path: str, source: str) -> HourlySeries:
    """Read and validate an hourly series: strict header, contiguous
    timestamps, nonnegative numeric power, row count divisible by 24."""
    _check_source(source)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != SERIES_HEADER:
            raise DataError(
                f"expected header {','.join(SERIES_HEADER)!r}, got {header!r}")
        timestamps: list[str] = []
        forecast: list[float] = []
        actual: list[float] = []
        prev: datetime | None = None
        for row_idx, row in enumerate(reader, start=2):
            if len(row) != 3:
                raise DataError(f"row {row_idx}: expected 3 columns, got {len(row)}")
            stamp = _parse_timestamp(row[0], row_idx)
            if prev is not None and stamp - prev != timedelta(hours=1):
                raise DataError(
                    f"row {row_idx}: timestamp gap ({prev} -> {stamp}), "
                    "series must be hourly-contiguous")
            prev = stamp
            timestamps.append(row[0].strip())
            forecast.append(_parse_power(row[1], row_idx, "forecast_mw"))
            actual.append(_parse_power(row[2], row_idx, "actual_mw"))
    if not timestamps:
        raise DataError("no data rows")
    if len(timestamps) % HOURS_PER_DAY != 0:
        raise DataError(
            f"{len(timestamps)} rows cannot be segmented into whole days "
            f"of {HOURS_PER_DAY} hours")
    return HourlySeries(timestamps=timestamps, forecast=np.array(forecast),
                        actual=np.array(actual), source=source)


def load_day_csv(path: str) -> tuple[np.ndarray, np.ndarray | None]:
    """Read a single-day file: `timestamp,forecast_mw[,actual_mw]`, 24 rows.

    Returns (forecast, actual-or-None) in MW.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header == SERIES_HEADER:
            has_actual = True
        elif header == SERIES_HEADER[:2]:
            has_actual = False
        else:
            raise DataError(
                f"expected header {','.join(SERIES_HEADER)!r} or "
                f"{','.join(SERIES_HEADER[:2])!r}, got {header!r}")
        forecast: list[float] = []
        actual: list[float] = []
        prev: datetime | None = None
        for row_idx, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataError(f"row {row_idx}: expected {len(header)} columns")
            stamp = _parse_timestamp(row[0], row_idx)
            if prev is not None and stamp - prev != timedelta(hours=1):
                raise DataError(f"row {row_idx}: timestamp gap")
            prev = stamp
            forecast.append(_parse_power(row[1], row_idx, "forecast_mw"))
            if has_actual:
                actual.append(_parse_power(row[2], row_idx, "actual_mw"))
    if len(forecast) != HOURS_PER_DAY:
        raise DataError(f"day file must have {HOURS_PER_DAY} rows, got {len(forecast)}")
    return (np.array(forecast), np.array(actual) if has_actual else None)


def fit_normalizer(series: HourlySeries, n_train_days: int) -> Normalizer:
    """Joint min/max over forecast and actual, training rows only."""
    if not 1 <= n_train_days <= series.n_days:
        raise DataError(
            f"n_train_days must be in 1..{series.n_days}, got {n_train_days}")
    n_rows = n_train_days * HOURS_PER_DAY
    train_values = np.concatenate([series.forecast[:n_rows], series.actual[:n_rows]])
    return Normalizer(vmin=float(train_values.min()), vmax=float(train_values.max()),
                      source=series.source)


def make_days(series: HourlySeries, normalizer: Normalizer) -> list[DaySample]:
    """Segment into consecutive 24-hour days with normalized values."""
    days = []
    for d in range(series.n_days):
        sl = slice(d * HOURS_PER_DAY, (d + 1) * HOURS_PER_DAY)
        days.append(DaySample(
            date=series.timestamps[sl.start][:10],
            forecast=normalizer.normalize(series.forecast[sl]),
            actual=normalizer.normalize(series.actual[sl]),
            source=series.source,
        ))
    return days


def split(days: list[DaySample], n_train: int) -> tuple[list[DaySample], list[DaySample]]:
    """Chronological split: first n_train days train, the rest test."""
    if n_train < 1:
        raise DataError(f"n_train must be >= 1, got {n_train}")
    if n_train >= len(days):
        raise DataError(
            f"n_train={n_train} leaves no test days out of {len(days)}")
    return days[:n_train], days[n_train:]


def load_dataset(path: str, source: str,
                 n_train: int) -> tuple[list[DaySample], list[DaySample], Normalizer]:
    """Load, fit the normalizer on the training prefix, segment, split."""
    series = load_csv(path, source)
    normalizer = fit_normalizer(series, n_train)
    days = make_days(series, normalizer)
    train_days, test_days = split(days, n_train)
    return train_days, test_days, normalizer

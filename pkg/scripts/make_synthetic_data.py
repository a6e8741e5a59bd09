#!/usr/bin/env python3
"""Generate a synthetic half-sine power series in the CSV layout the CLI ingests.

Each day is a scaled half-sine bump: the forecast is the clean bump, the
actual adds Gaussian noise and clips at zero. Amplitudes vary day to day so
a conditional model has something to learn. Writes either a multi-day
history (timestamp,forecast_mw,actual_mw) or a single-day forecast file
usable with `diffscen sample`.
"""

from __future__ import annotations

import argparse
import csv
import sys
from datetime import datetime, timedelta

import numpy as np

HOURS_PER_DAY = 24
# half-sine over the day: zero at both ends, peak near noon
DAY_SHAPE = np.sin(np.pi * np.arange(HOURS_PER_DAY) / (HOURS_PER_DAY - 1))


def day_curves(amplitude_mw: float, noise_mw: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Forecast and actual for one day, in MW."""
    forecast = amplitude_mw * DAY_SHAPE
    actual = forecast + rng.normal(0.0, noise_mw, size=HOURS_PER_DAY)
    return forecast, np.maximum(actual, 0.0)


def write_series(path: str, n_days: int, peak_mw: float, noise_mw: float, seed: int,
                 start: str = "2021-01-01") -> None:
    """Write an n_days history with per-day amplitudes uniform in [0.3, 1.0]*peak."""
    rng = np.random.default_rng(seed)
    t0 = datetime.fromisoformat(start)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["timestamp", "forecast_mw", "actual_mw"])
        for day in range(n_days):
            amp = peak_mw * rng.uniform(0.3, 1.0)
            forecast, actual = day_curves(amp, noise_mw, rng)
            for hour in range(HOURS_PER_DAY):
                stamp = t0 + timedelta(days=day, hours=hour)
                writer.writerow([stamp.isoformat(sep=" "), repr(float(forecast[hour])), repr(float(actual[hour]))])


def write_day(path: str, amplitude_mw: float, noise_mw: float, seed: int,
              with_actual: bool, start: str = "2022-01-01") -> None:
    """Write a single forecast day, optionally with a noisy actual column."""
    rng = np.random.default_rng(seed)
    forecast, actual = day_curves(amplitude_mw, noise_mw, rng)
    t0 = datetime.fromisoformat(start)
    header = ["timestamp", "forecast_mw"] + (["actual_mw"] if with_actual else [])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for hour in range(HOURS_PER_DAY):
            row = [(t0 + timedelta(hours=hour)).isoformat(sep=" "), repr(float(forecast[hour]))]
            if with_actual:
                row.append(repr(float(actual[hour])))
            writer.writerow(row)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", required=True, help="output CSV path")
    parser.add_argument("--days", type=int, default=220, help="number of days (multi-day mode)")
    parser.add_argument("--peak-mw", type=float, default=10.0, help="amplitude of the largest day")
    parser.add_argument("--noise-mw", type=float, default=0.5, help="std of the additive noise on actuals")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--single-day", action="store_true",
                        help="write one 24-row day instead of a history")
    parser.add_argument("--amplitude-mw", type=float, default=7.0,
                        help="day amplitude in single-day mode")
    parser.add_argument("--with-actual", action="store_true",
                        help="include actual_mw in single-day mode (for eval)")
    args = parser.parse_args(argv)

    if args.single_day:
        write_day(args.out, args.amplitude_mw, args.noise_mw, args.seed, args.with_actual)
        print(f"wrote 1 day to {args.out}")
    else:
        if args.days < 2:
            parser.error("--days must be at least 2")
        write_series(args.out, args.days, args.peak_mw, args.noise_mw, args.seed)
        print(f"wrote {args.days} days to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Scenario evaluation: autocorrelation, coverage, interval width, distance.

A scenario set is W trajectories over the same day. Coverage and width are
computed from per-timestep envelopes; the 100 percent envelope is the
pointwise min/max, narrower levels use central empirical quantiles.
Distance is the mean Euclidean gap between each scenario and the actual.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import IO, Sequence

import numpy as np

__all__ = [
    "MetricsError",
    "ScenarioSet",
    "IntervalReport",
    "acf",
    "acf_profile",
    "interval",
    "coverage_rate",
    "piw",
    "aed",
    "build_report",
    "write_report_csv",
]

DEFAULT_LEVELS = (100.0, 90.0, 80.0, 60.0)
DEFAULT_MAX_LAG = 6


class MetricsError(ValueError):
    """Invalid metric input (bad level, undefined statistic, shape mismatch)."""


@dataclass
class ScenarioSet:
    """W generated day trajectories plus the forecast they were conditioned on."""

    values: np.ndarray
    condition: np.ndarray | None = None
    normalized: bool = True
    seed: int | None = None
    model_id: str = ""

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[0] < 1 or self.values.shape[1] < 1:
            raise MetricsError(f"values must be (W, L) with W >= 1, got {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise MetricsError("scenario values contain non-finite entries")

    @property
    def n_scenarios(self) -> int:
        return self.values.shape[0]

    @property
    def seq_len(self) -> int:
        return self.values.shape[1]


def _check_series(actual: np.ndarray, seq_len: int) -> np.ndarray:
    actual = np.asarray(actual, dtype=np.float64)
    if actual.shape != (seq_len,):
        raise MetricsError(f"series must have shape ({seq_len},), got {actual.shape}")
    if not np.all(np.isfinite(actual)):
        raise MetricsError("series contains non-finite entries")
    return actual


def acf(series: np.ndarray, tau: int) -> float:
    """Autocorrelation at lag tau with the biased 1/L estimator; acf(s, 0) = 1."""
    s = np.asarray(series, dtype=np.float64)
    if s.ndim != 1:
        raise MetricsError(f"series must be one-dimensional, got shape {s.shape}")
    length = s.size
    if not 0 <= tau < length:
        raise MetricsError(f"lag must satisfy 0 <= tau < {length}, got {tau}")
    if np.all(s == s[0]):
        raise MetricsError("undefined autocorrelation: series is constant")
    centered = s - s.mean()
    variance = float(np.mean(centered * centered))
    if variance == 0.0:
        raise MetricsError("undefined autocorrelation: series has zero variance")
    if tau == 0:
        return 1.0
    cov = float(np.dot(centered[: length - tau], centered[tau:])) / length
    return cov / variance


def acf_profile(series: np.ndarray, max_lag: int = DEFAULT_MAX_LAG) -> np.ndarray:
    """acf at lags 0..max_lag as one vector."""
    return np.array([acf(series, tau) for tau in range(max_lag + 1)])


def interval(sset: ScenarioSet, theta: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-timestep (lower, upper) envelope at confidence level theta percent."""
    if not 0.0 < theta <= 100.0:
        raise MetricsError(f"confidence level must be in (0, 100], got {theta}")
    vals = sset.values
    if theta == 100.0:
        return vals.min(axis=0), vals.max(axis=0)
    if sset.n_scenarios < 2:
        raise MetricsError("quantile envelope needs at least 2 scenarios")
    lo = (1.0 - theta / 100.0) / 2.0
    hi = (1.0 + theta / 100.0) / 2.0
    return np.quantile(vals, lo, axis=0), np.quantile(vals, hi, axis=0)


def coverage_rate(sset: ScenarioSet, actual: np.ndarray, theta: float) -> float:
    """Percent of timesteps whose actual value falls inside the envelope."""
    actual = _check_series(actual, sset.seq_len)
    lower, upper = interval(sset, theta)
    inside = (actual >= lower) & (actual <= upper)
    return float(inside.mean() * 100.0)


def piw(sset: ScenarioSet, theta: float) -> float:
    """Mean envelope width across timesteps."""
    lower, upper = interval(sset, theta)
    return float(np.mean(upper - lower))


def aed(sset: ScenarioSet, actual: np.ndarray) -> float:
    """Mean over scenarios of the Euclidean distance to the actual day."""
    actual = _check_series(actual, sset.seq_len)
    gaps = sset.values - actual
    return float(np.mean(np.sqrt(np.sum(gaps * gaps, axis=1))))


@dataclass(frozen=True)
class IntervalReport:
    """Envelope metrics at each level plus distance and ACF summaries.

    acf rows aggregate per-scenario autocorrelations: median and the 5/95
    percent quantiles across scenarios at each lag. Scenarios with zero
    variance cannot contribute and are counted in n_constant_scenarios.
    """

    levels: tuple[float, ...]
    coverage: dict[float, float]
    width: dict[float, float]
    bounds: dict[float, tuple[np.ndarray, np.ndarray]]
    aed: float
    acf_median: np.ndarray | None
    acf_q05: np.ndarray | None
    acf_q95: np.ndarray | None
    acf_actual: np.ndarray | None
    n_constant_scenarios: int


def build_report(sset: ScenarioSet, actual: np.ndarray,
                 levels: Sequence[float] = DEFAULT_LEVELS,
                 max_lag: int = DEFAULT_MAX_LAG) -> IntervalReport:
    actual = _check_series(actual, sset.seq_len)
    if len(levels) == 0:
        raise MetricsError("need at least one confidence level")
    ordered = tuple(sorted({float(v) for v in levels}, reverse=True))

    coverage: dict[float, float] = {}
    width: dict[float, float] = {}
    bounds: dict[float, tuple[np.ndarray, np.ndarray]] = {}
    for theta in ordered:
        lower, upper = interval(sset, theta)
        bounds[theta] = (lower, upper)
        coverage[theta] = coverage_rate(sset, actual, theta)
        width[theta] = piw(sset, theta)

    profiles = []
    n_constant = 0
    for row in sset.values:
        try:
            profiles.append(acf_profile(row, max_lag))
        except MetricsError:
            n_constant += 1
    if profiles:
        stack = np.vstack(profiles)
        acf_median = np.median(stack, axis=0)
        acf_q05 = np.quantile(stack, 0.05, axis=0)
        acf_q95 = np.quantile(stack, 0.95, axis=0)
    else:
        acf_median = acf_q05 = acf_q95 = None
    try:
        acf_act = acf_profile(actual, max_lag)
    except MetricsError:
        acf_act = None

    return IntervalReport(
        levels=ordered,
        coverage=coverage,
        width=width,
        bounds=bounds,
        aed=aed(sset, actual),
        acf_median=acf_median,
        acf_q05=acf_q05,
        acf_q95=acf_q95,
        acf_actual=acf_act,
        n_constant_scenarios=n_constant,
    )


def _fmt(v: float) -> str:
    # repr round-trips exactly, keeping repeated runs byte-identical
    return repr(float(v))


def write_report_csv(report: IntervalReport, stream: IO[str]) -> None:
    """Level table first, then single-key summary rows."""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["theta", "coverage_pct", "piw"])
    for theta in report.levels:
        writer.writerow([_fmt(theta), _fmt(report.coverage[theta]), _fmt(report.width[theta])])
    writer.writerow(["aed", _fmt(report.aed)])
    if report.acf_median is not None:
        for lag in range(report.acf_median.size):
            writer.writerow([
                f"acf_lag{lag}",
                _fmt(report.acf_median[lag]),
                _fmt(report.acf_q05[lag]),
                _fmt(report.acf_q95[lag]),
            ])
    if report.acf_actual is not None:
        for lag in range(report.acf_actual.size):
            writer.writerow([f"acf_actual_lag{lag}", _fmt(report.acf_actual[lag])])

"""Slice-traffic modelling: trace ingestion, synthetic weekly traces and
truncated-normal per-interval sampling."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import datetime, timedelta

import numpy as np

from .domain import TrafficSeries

TRACE_HEADER = ("timestamp", "activity")
TRACE_START = datetime(2013, 11, 4)  # a Monday


class TraceFormatError(ValueError):
    pass


@dataclass(frozen=True)
class TraceStats:
    sigma_mean: float  # users/s
    sigma_max: float

    def __post_init__(self):
        if not 0 <= self.sigma_mean <= self.sigma_max + 1e-12:
            raise ValueError("expected 0 <= sigma_mean <= sigma_max")


@dataclass(frozen=True)
class TrafficDistribution:
    center: float
    std: float

    def __post_init__(self):
        if not self.center > 0:
            raise ValueError("center must be > 0")
        if self.std < 0:
            raise ValueError("std must be >= 0")

    @property
    def lower(self) -> float:
        return 0.0

    @property
    def upper(self) -> float:
        return self.center + 4.0 * self.std


def read_trace_csv(path):
    """Rows of (datetime, activity) from a ``timestamp,activity`` CSV."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != TRACE_HEADER:
            raise TraceFormatError(f"{path}:1: expected header 'timestamp,activity'")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise TraceFormatError(f"{path}:{lineno}: expected 2 fields, got {len(row)}")
            try:
                ts = datetime.fromisoformat(row[0].strip())
                act = float(row[1])
            except ValueError as exc:
                raise TraceFormatError(f"{path}:{lineno}: {exc}") from None
            if not math.isfinite(act) or act < 0:
                raise TraceFormatError(f"{path}:{lineno}: activity must be finite and >= 0")
            rows.append((ts, act))
    return rows


def trace_stats(rows, peak: float = 5.0) -> TraceStats:
    """Hour-of-day standard deviations across the trace, in users/s."""
    if len(rows) < 24:
        raise TraceFormatError(f"trace needs at least 24 rows, got {len(rows)}")
    act = np.array([a for _, a in rows], dtype=np.float64)
    hours = np.array([ts.hour for ts, _ in rows])
    top = act.max()
    norm = act / top if top > 0 else act
    stds = [norm[hours == h].std() for h in np.unique(hours)]
    stds = np.array(stds) * peak
    return TraceStats(float(stds.mean()), float(stds.max()))


def ingest_trace_csv(path, peak: float = 5.0) -> TraceStats:
    return trace_stats(read_trace_csv(path), peak)


def synth_weekly_trace(seed=0, amplitude: float = 1.0, noise: float = 0.05):
    """One week of hourly activity: diurnal cycle scaled by a weekly cycle plus noise."""
    if amplitude < 0 or noise < 0:
        raise ValueError("amplitude and noise must be >= 0")
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(7 * 24):
        day, hour = divmod(i, 24)
        diurnal = 0.5 * (1.0 + math.sin(2.0 * math.pi * (hour - 8) / 24.0))
        weekly = 1.0 + 0.5 * math.cos(2.0 * math.pi * day / 7.0)
        value = 1.0 + amplitude * weekly * diurnal + noise * rng.standard_normal()
        rows.append((TRACE_START + timedelta(hours=i), max(0.0, value)))
    return rows


def write_trace_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for ts, act in rows:
            w.writerow([ts.isoformat(), repr(float(act))])


def sample_traffic_series(dist: TrafficDistribution, tau: int, seed=0) -> TrafficSeries:
    """``tau`` truncated-normal draws on [0, center + 4 std] by rejection."""
    if tau < 1:
        raise ValueError("tau must be >= 1")
    if dist.std == 0:
        return TrafficSeries.constant(dist.center, tau)
    rng = np.random.default_rng(seed)
    out = np.empty(0)
    while out.size < tau:
        z = dist.center + dist.std * rng.standard_normal(2 * tau)
        z = z[(z >= dist.lower) & (z <= dist.upper)]
        out = np.concatenate([out, z])
    return TrafficSeries(out[:tau])

"""Parametric ground-truth network simulator.

Stands in for a physical testbed: end-to-end throughput per user is limited by
whichever of gNB compute or transport bandwidth is the bottleneck, shared
between the connected users and capped by the application's own rate.
Observation noise is heteroscedastic Gaussian, clamped at zero.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .domain import ConfigurationError, ResourceVector, SlaSpec, TrafficSeries

CSV_HEADER = ("x_users", "cpu_millicores", "bw_mbps", "qos_mbps", "split")
SPLITS = ("train", "validation", "test")


@dataclass(frozen=True)
class OracleParams:
    cpu_capacity_slope: float = 0.01  # Mbps per millicore
    app_max_rate: float = 8.0
    noise_base: float = 0.25
    noise_slope: float = 0.05

    def __post_init__(self):
        if self.cpu_capacity_slope <= 0:
            raise ConfigurationError("cpu_capacity_slope must be > 0")
        if self.app_max_rate <= 0:
            raise ConfigurationError("app_max_rate must be > 0")
        if self.noise_base < 0 or self.noise_slope < 0:
            raise ConfigurationError("noise parameters must be >= 0")

    @property
    def noiseless(self) -> bool:
        return self.noise_base == 0 and self.noise_slope == 0

    def noise_std(self, mean):
        return self.noise_base + self.noise_slope * np.asarray(mean, dtype=np.float64)


@dataclass(frozen=True)
class AxisRange:
    """Inclusive ``start..stop`` in increments of ``step``."""

    start: float
    stop: float
    step: float

    def __post_init__(self):
        if not self.step > 0:
            raise ConfigurationError("range step must be > 0")
        if self.stop < self.start:
            raise ConfigurationError("range is empty (stop < start)")

    def values(self) -> np.ndarray:
        n = int(np.floor((self.stop - self.start) / self.step + 1e-9)) + 1
        return self.start + self.step * np.arange(n, dtype=np.float64)

    def midpoints(self) -> np.ndarray:
        v = self.values()
        if v.size == 1:
            return v
        return 0.5 * (v[:-1] + v[1:])


@dataclass(frozen=True)
class GridSpec:
    traffic_range: AxisRange = field(default_factory=lambda: AxisRange(1, 5, 1))
    cpu_range: AxisRange = field(default_factory=lambda: AxisRange(500, 4000, 500))
    bandwidth_range: AxisRange = field(default_factory=lambda: AxisRange(5, 40, 5))
    samples_per_point: int = 100
    validation_fraction: float = 0.2

    def __post_init__(self):
        if self.samples_per_point < 1:
            raise ConfigurationError("samples_per_point must be >= 1")
        if not 0 <= self.validation_fraction < 1:
            raise ConfigurationError("validation_fraction must lie in [0, 1)")

    def points(self) -> np.ndarray:
        """Grid points as rows of (x, cpu, bw)."""
        return np.array(
            list(product(self.traffic_range.values(), self.cpu_range.values(),
                         self.bandwidth_range.values())),
            dtype=np.float64,
        ).reshape(-1, 3)

    def offgrid_points(self) -> np.ndarray:
        return np.array(
            list(product(self.traffic_range.midpoints(), self.cpu_range.midpoints(),
                         self.bandwidth_range.midpoints())),
            dtype=np.float64,
        ).reshape(-1, 3)

    @property
    def cardinality(self) -> int:
        return (self.traffic_range.values().size * self.cpu_range.values().size
                * self.bandwidth_range.values().size)


def _mean(x, cpu, bw, p: OracleParams):
    return np.minimum(p.app_max_rate, np.minimum(p.cpu_capacity_slope * cpu, bw) / x)


def oracle_qos_mean(x: float, r, p: OracleParams = OracleParams()) -> float:
    if not x > 0:
        raise ValueError(f"traffic must be > 0, got {x}")
    rv = r.values if isinstance(r, ResourceVector) else np.asarray(r, dtype=np.float64)
    return float(_mean(x, rv[0], rv[1], p))


def oracle_qos_mean_batch(x, cpu, bw, p: OracleParams = OracleParams()) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if np.any(x <= 0):
        raise ValueError("traffic must be > 0")
    return _mean(x, np.asarray(cpu, dtype=np.float64), np.asarray(bw, dtype=np.float64), p)


def _draw(mean, p: OracleParams, rng: np.random.Generator):
    mean = np.asarray(mean, dtype=np.float64)
    noise = rng.standard_normal(mean.shape) * p.noise_std(mean)
    return np.maximum(0.0, mean + noise)


def oracle_qos_sample(x: float, r, p: OracleParams = OracleParams(), rng_seed=0) -> float:
    mean = oracle_qos_mean(x, r, p)
    return float(_draw(mean, p, np.random.default_rng(rng_seed)))


def oracle_qos_samples(x: float, r, n: int, p: OracleParams = OracleParams(), rng_seed=0) -> np.ndarray:
    mean = oracle_qos_mean(x, r, p)
    return _draw(np.full(n, mean), p, np.random.default_rng(rng_seed))


@dataclass(frozen=True)
class QoSDataset:
    x: np.ndarray
    r: np.ndarray  # (n, K)
    q: np.ndarray
    split: np.ndarray  # array of split tags

    def __post_init__(self):
        n = self.x.shape[0]
        if self.r.shape[0] != n or self.q.shape[0] != n or self.split.shape[0] != n:
            raise ConfigurationError("dataset columns have inconsistent lengths")
        if np.any(self.q < 0):
            raise ConfigurationError("observed QoS must be >= 0")

    def __len__(self) -> int:
        return self.x.shape[0]

    def subset(self, split: str) -> "QoSDataset":
        m = self.split == split
        return QoSDataset(self.x[m], self.r[m], self.q[m], self.split[m])

    def has_split(self, split: str) -> bool:
        return bool(np.any(self.split == split))

    def counts(self) -> dict:
        return {s: int(np.sum(self.split == s)) for s in SPLITS}

    def features(self) -> np.ndarray:
        return np.column_stack([self.x, self.r])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_HEADER)
            for x, r, q, s in zip(self.x, self.r, self.q, self.split):
                w.writerow([repr(float(x)), repr(float(r[0])), repr(float(r[1])), repr(float(q)), s])

    @classmethod
    def from_csv(cls, *paths) -> "QoSDataset":
        rows = []
        for path in paths:
            with open(path, newline="") as fh:
                reader = csv.reader(fh)
                header = next(reader, None)
                if header is None or tuple(header) != CSV_HEADER:
                    raise ConfigurationError(f"{path}: expected header {','.join(CSV_HEADER)}")
                for lineno, row in enumerate(reader, start=2):
                    if len(row) != len(CSV_HEADER) or row[4] not in SPLITS:
                        raise ConfigurationError(f"{path}:{lineno}: malformed row")
                    try:
                        rows.append((float(row[0]), float(row[1]), float(row[2]), float(row[3]), row[4]))
                    except ValueError as exc:
                        raise ConfigurationError(f"{path}:{lineno}: {exc}") from None
        if not rows:
            raise ConfigurationError("dataset is empty")
        x, c, b, q, s = zip(*rows)
        return cls(np.array(x), np.column_stack([c, b]), np.array(q), np.array(s))


def generate_grid_dataset(grid: GridSpec = GridSpec(), p: OracleParams = OracleParams(),
                          seed: int = 0) -> QoSDataset:
    """Sample the oracle on the grid (train/validation pool) and at off-grid
    midpoints (test split)."""
    pts = grid.points()
    if pts.shape[0] == 0:
        raise ConfigurationError("grid is empty")
    ss = np.random.SeedSequence(seed)
    pool_rng, split_rng, test_rng = (np.random.default_rng(s) for s in ss.spawn(3))

    k = grid.samples_per_point
    pool = np.repeat(pts, k, axis=0)
    q_pool = _draw(_mean(pool[:, 0], pool[:, 1], pool[:, 2], p), p, pool_rng)
    n_val = int(round(grid.validation_fraction * pool.shape[0]))
    tags = np.array(["train"] * pool.shape[0], dtype=object)
    tags[split_rng.permutation(pool.shape[0])[:n_val]] = "validation"

    off = grid.offgrid_points()
    grid_set = {tuple(row) for row in pts.tolist()}
    off = np.array([row for row in off.tolist() if tuple(row) not in grid_set]).reshape(-1, 3)
    test = np.repeat(off, k, axis=0)
    q_test = _draw(_mean(test[:, 0], test[:, 1], test[:, 2], p), p, test_rng) if test.size else np.empty(0)

    allp = np.vstack([pool, test])
    return QoSDataset(
        x=allp[:, 0].copy(),
        r=allp[:, 1:].copy(),
        q=np.concatenate([q_pool, q_test]),
        split=np.concatenate([tags, np.array(["test"] * test.shape[0], dtype=object)]).astype(str),
    )


def evaluate_allocation(traffic: TrafficSeries, r, sla: SlaSpec, p: OracleParams = OracleParams(),
                        n_trials: int = 200, seed=0) -> float:
    """Mean strict degradation of ``r`` over ``n_trials`` simulated intervals."""
    from .degradation import beta_strict_batch

    x = traffic.values
    if not traffic.total > 0:
        raise ValueError("total traffic must be > 0")
    rv = r.values if isinstance(r, ResourceVector) else np.asarray(r, dtype=np.float64)
    active = x > 0
    mean = np.zeros_like(x)
    mean[active] = _mean(x[active], rv[0], rv[1], p)
    rng = np.random.default_rng(seed)
    total = 0.0
    chunk = max(1, 200_000 // x.size)
    done = 0
    while done < n_trials:
        m = min(chunk, n_trials - done)
        q = _draw(np.broadcast_to(mean, (m, x.size)), p, rng)
        total += float(beta_strict_batch(x, q, sla.q_thresh).sum())
        done += m
    return total / n_trials


class OracleModel:
    """The oracle exposed through the slice-model interface.

    ``sigma`` is zero unless ``noisy`` is set, in which case the oracle's own
    noise std is reported (ignoring the clamp at zero). Gradients of the
    bottleneck ``min`` go to the active argument, split evenly on ties.
    """

    def __init__(self, params: OracleParams = OracleParams(), noisy: bool = False):
        self.params = params
        self.noisy = noisy

    def dist_and_grad(self, x, r):
        p = self.params
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        if np.any(x <= 0):
            raise ValueError("traffic must be > 0")
        rv = np.asarray(getattr(r, "values", r), dtype=np.float64)
        cpu_cap = p.cpu_capacity_slope * rv[0]
        bw = rv[1]
        link = min(cpu_cap, bw)
        raw = link / x
        mu = np.minimum(p.app_max_rate, raw)
        w_cpu = 1.0 if cpu_cap < bw else (0.0 if cpu_cap > bw else 0.5)
        uncapped = (raw < p.app_max_rate).astype(np.float64)
        dmu = np.zeros((x.size, rv.size))
        dmu[:, 0] = uncapped * w_cpu * p.cpu_capacity_slope / x
        dmu[:, 1] = uncapped * (1.0 - w_cpu) / x
        if self.noisy:
            return mu, p.noise_std(mu), dmu, p.noise_slope * dmu
        return mu, np.zeros_like(mu), dmu, np.zeros_like(dmu)

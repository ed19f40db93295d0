"""Core value types, unit conventions and the normalized cost.

Resources are kept in raw units (millicores, Mbps) everywhere; normalization
only happens through :class:`CostWeights`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

RESOURCE_KINDS = ("cpu_millicores", "bandwidth_mbps")

# max eMBB allocations; also the default capacities
MAX_CPU_MILLICORES = 4500.0
MAX_BANDWIDTH_MBPS = 50.0


class ConfigurationError(ValueError):
    """Raised for malformed or dimensionally inconsistent configuration."""


def _as_vector(values: Sequence[float], name: str) -> np.ndarray:
    arr = np.array(values, dtype=np.float64).reshape(-1)
    if arr.size < 1:
        raise ConfigurationError(f"{name} must have at least one component")
    if not np.all(np.isfinite(arr)):
        raise ConfigurationError(f"{name} must be finite")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ResourceVector:
    """Allocation of K resources to one slice, ordered as ``RESOURCE_KINDS``."""

    values: np.ndarray

    def __init__(self, values: Sequence[float]):
        arr = _as_vector(values, "ResourceVector")
        if np.any(arr < 0):
            raise ConfigurationError("ResourceVector components must be >= 0")
        object.__setattr__(self, "values", arr)

    @classmethod
    def of(cls, cpu_millicores: float, bandwidth_mbps: float) -> "ResourceVector":
        return cls([cpu_millicores, bandwidth_mbps])

    @property
    def cpu_millicores(self) -> float:
        return float(self.values[0])

    @property
    def bandwidth_mbps(self) -> float:
        return float(self.values[1])

    def __len__(self) -> int:
        return self.values.size

    def __iter__(self):
        return iter(self.values.tolist())

    def __eq__(self, other) -> bool:
        if not isinstance(other, ResourceVector):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    def __hash__(self) -> int:
        return hash(tuple(self.values.tolist()))

    def __repr__(self) -> str:
        return f"ResourceVector({self.values.tolist()})"


@dataclass(frozen=True)
class CapacityVector:
    values: np.ndarray

    def __init__(self, values: Sequence[float]):
        arr = _as_vector(values, "CapacityVector")
        if np.any(arr <= 0):
            raise ConfigurationError("CapacityVector components must be > 0")
        object.__setattr__(self, "values", arr)

    @classmethod
    def default(cls) -> "CapacityVector":
        return cls([MAX_CPU_MILLICORES, MAX_BANDWIDTH_MBPS])

    def __len__(self) -> int:
        return self.values.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, CapacityVector):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    def __hash__(self) -> int:
        return hash(tuple(self.values.tolist()))


@dataclass(frozen=True)
class CostWeights:
    """Per-unit normalized cost of each resource (the eta vector)."""

    values: np.ndarray

    def __init__(self, values: Sequence[float]):
        arr = _as_vector(values, "CostWeights")
        if np.any(arr <= 0):
            raise ConfigurationError("CostWeights components must be > 0")
        object.__setattr__(self, "values", arr)

    @classmethod
    def default(cls) -> "CostWeights":
        return cls([1.0 / MAX_CPU_MILLICORES, 1.0 / MAX_BANDWIDTH_MBPS])

    def __len__(self) -> int:
        return self.values.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, CostWeights):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    def __hash__(self) -> int:
        return hash(tuple(self.values.tolist()))


@dataclass(frozen=True)
class SlaSpec:
    q_thresh: float
    beta_thresh: float
    weights: CostWeights = field(default_factory=CostWeights.default)


@dataclass(frozen=True)
class SlaVerdict:
    valid: bool
    reason: str = ""

    def __bool__(self) -> bool:
        return self.valid


def validate_sla(sla: SlaSpec) -> SlaVerdict:
    """Check SLA invariants, reporting the first one violated."""
    if not np.isfinite(sla.q_thresh) or sla.q_thresh <= 0:
        return SlaVerdict(False, "q_thresh must be positive")
    if not np.isfinite(sla.beta_thresh) or not 0.0 <= sla.beta_thresh <= 1.0:
        return SlaVerdict(False, "beta_thresh must lie in [0,1]")
    return SlaVerdict(True)


@dataclass(frozen=True)
class TrafficSeries:
    """Per-second slice traffic (users/s) over one reconfiguration interval."""

    values: np.ndarray

    def __init__(self, values: Sequence[float]):
        arr = np.array(values, dtype=np.float64).reshape(-1)
        if arr.size < 1:
            raise ConfigurationError("TrafficSeries must contain at least one slot")
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise ConfigurationError("traffic values must be finite and >= 0")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @classmethod
    def constant(cls, rate: float, tau: int) -> "TrafficSeries":
        return cls(np.full(int(tau), float(rate)))

    @property
    def tau(self) -> int:
        return self.values.size

    @property
    def total(self) -> float:
        return float(self.values.sum())

    @property
    def peak(self) -> float:
        return float(self.values.max())

    def __len__(self) -> int:
        return self.values.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, TrafficSeries):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    def __hash__(self) -> int:
        return hash(self.values.tobytes())


def _values(v) -> np.ndarray:
    if isinstance(v, (ResourceVector, CapacityVector, CostWeights)):
        return v.values
    return np.asarray(v, dtype=np.float64)


def normalized_cost(weights, r) -> float:
    """Weighted resource sum ``eta . r``."""
    w = _values(weights)
    x = _values(r)
    if w.shape != x.shape:
        raise ConfigurationError(
            f"dimension mismatch: weights have {w.size} components, allocation has {x.size}"
        )
    return float(np.dot(w, x))

"""Comparison allocators.

``peak_alloc`` and ``grid_optimum`` search a resource grid against the oracle
evaluator; ``scalar_variant_optimize`` reruns the optimizer with the QoS
distribution collapsed to the scalar ``mu - k * sigma``.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace

import numpy as np

from .domain import ResourceVector, SlaSpec, TrafficSeries
from .oracle import AxisRange, OracleParams, evaluate_allocation
from .optimizer import OptimizerConfig, Problem, Solution, SliceProblem, optimize


class InfeasibleGridError(RuntimeError):
    """No grid point satisfies the SLA."""


@dataclass(frozen=True)
class SearchGrid:
    cpu_range: AxisRange = field(default_factory=lambda: AxisRange(100, 4500, 100))
    bandwidth_range: AxisRange = field(default_factory=lambda: AxisRange(1, 50, 1))

    def points(self) -> np.ndarray:
        c = self.cpu_range.values()
        b = self.bandwidth_range.values()
        cc, bb = np.meshgrid(c, b, indexing="ij")
        return np.column_stack([cc.ravel(), bb.ravel()])


def point_seed(seed: int, r) -> int:
    """Seed for one grid point, independent of evaluation order."""
    key = f"{int(seed)}:" + ",".join(repr(float(v)) for v in np.asarray(r).ravel())
    return int.from_bytes(hashlib.sha256(key.encode()).digest()[:8], "little")


@dataclass(frozen=True)
class OracleEvaluator:
    """Measured strict degradation via repeated oracle simulation."""

    params: OracleParams = field(default_factory=OracleParams)
    n_trials: int = 200
    seed: int = 0

    def __call__(self, traffic: TrafficSeries, r, sla: SlaSpec) -> float:
        rv = np.asarray(getattr(r, "values", r), dtype=np.float64)
        return evaluate_allocation(traffic, rv, sla, self.params, self.n_trials, point_seed(self.seed, rv))


def grid_optimum(evaluator, traffic: TrafficSeries, grid: SearchGrid, sla: SlaSpec) -> ResourceVector:
    """Cheapest grid point whose measured degradation is within the SLA.

    Points are visited in (cost, cpu, bandwidth) order and the first feasible
    one is returned, which equals the exhaustive argmin under that tie-break.
    """
    pts = grid.points()
    eta = sla.weights.values
    cost = pts @ eta
    order = np.lexsort((pts[:, 1], pts[:, 0], cost))
    for i in order:
        if evaluator(traffic, pts[i], sla) <= sla.beta_thresh:
            return ResourceVector(pts[i])
    raise InfeasibleGridError(
        f"no grid point meets q_thresh={sla.q_thresh}, beta_thresh={sla.beta_thresh}")


PEAK_SLA = SlaSpec(q_thresh=5.0, beta_thresh=0.01)


def peak_alloc(evaluator, peak_traffic: float = 5.0, grid: SearchGrid = SearchGrid(),
               strict_sla: SlaSpec = PEAK_SLA, tau: int = 300) -> ResourceVector:
    """Static allocation sized for constant peak traffic under a strict SLA."""
    return grid_optimum(evaluator, TrafficSeries.constant(peak_traffic, tau), grid, strict_sla)


class ScalarModel:
    """Wraps a slice model so it reports the deterministic QoS ``mu - k * sigma``."""

    def __init__(self, base, k_sigma: float):
        self.base = base
        self.k_sigma = float(k_sigma)

    def dist_and_grad(self, x, r):
        mu, sig, dmu, dsig = self.base.dist_and_grad(x, r)
        k = self.k_sigma
        return mu - k * sig, np.zeros_like(sig), dmu - k * dsig, np.zeros_like(dsig)


def scalar_variant_optimize(problem: Problem, cfg: OptimizerConfig = OptimizerConfig(),
                            k_sigma: float = 0.0) -> Solution:
    if k_sigma < 0:
        raise ValueError("k_sigma must be >= 0")
    slices = [SliceProblem(ScalarModel(s.model, k_sigma), s.traffic, s.sla) for s in problem.slices]
    return optimize(replace(problem, slices=tuple(slices)), cfg)

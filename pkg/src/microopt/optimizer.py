"""Primal-dual resource optimization over the surrogate Lagrangian.

Inner loop: projected gradient descent on the surrogate Lagrangian in
capacity-normalized coordinates ``u = r / R``, halving the step whenever it
fails to decrease the objective. Outer loop: projected subgradient ascent on
the QoS and capacity multipliers driven by the *strict* degradation, with the
upper bound tracking the cheapest certified-feasible allocation and the lower
bound the best dual estimate.

Capacity terms are scaled by ``1 / R_k`` so one step size serves every
resource: ``mu_k * (sum_s r_sk - R_k) / R_k``.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np

from .degradation import EpsilonPanel, SurrogateConfig, expected_beta
from .domain import CapacityVector, CostWeights, ResourceVector, SlaSpec, TrafficSeries

CAPACITY_TOL = 1e-6


class OptimizationError(RuntimeError):
    """Raised when the descent hits a non-finite value or gradient."""


@dataclass(frozen=True)
class SliceProblem:
    model: object
    traffic: TrafficSeries
    sla: SlaSpec


@dataclass(frozen=True)
class Problem:
    slices: tuple
    capacity: CapacityVector = field(default_factory=CapacityVector.default)
    weights: CostWeights = field(default_factory=CostWeights.default)

    def __post_init__(self):
        object.__setattr__(self, "slices", tuple(self.slices))
        if not self.slices:
            raise ValueError("problem needs at least one slice")
        if len(self.capacity) != len(self.weights):
            raise ValueError("capacity and weights must share the resource dimension")

    @property
    def n_slices(self) -> int:
        return len(self.slices)

    @property
    def n_resources(self) -> int:
        return len(self.capacity)

    @property
    def R(self) -> np.ndarray:
        return self.capacity.values

    @property
    def eta(self) -> np.ndarray:
        return self.weights.values


@dataclass(frozen=True)
class OptimizerConfig:
    alpha1: float = 0.05
    alpha2: float = 1.0
    alpha3: float = 1.0
    tau1_max: int = 50
    tau2_max: int = 200
    eps1: float = 0.01
    eps2: float = 1e-4
    n_init: int = 16
    surrogate: SurrogateConfig = field(default_factory=SurrogateConfig)
    n_mc_update: int = 256
    n_mc_certify: int = 512
    n_restarts: int = 3
    polish: bool = True
    polish_steps: int = 30
    seed: int = 0

    def __post_init__(self):
        for name in ("alpha1", "alpha2", "alpha3", "eps1", "eps2"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        for name in ("tau1_max", "tau2_max", "n_init", "n_mc_update", "n_mc_certify", "n_restarts"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


@dataclass
class DualState:
    lam: np.ndarray  # per slice
    mu: np.ndarray  # per resource

    @classmethod
    def zeros(cls, n_slices: int, n_resources: int) -> "DualState":
        return cls(np.zeros(n_slices), np.zeros(n_resources))

    def copy(self) -> "DualState":
        return DualState(self.lam.copy(), self.mu.copy())


@dataclass
class Solution:
    allocations: List[ResourceVector]
    dual: DualState
    lb_history: List[float]
    ub_history: List[float]
    feasible: bool
    cost: float
    certified_betas: List[float]
    outer_iterations: int
    inner_iterations: int
    wall_time: float
    seed: int
    restart: int = 0
    diagnostics: str = ""
    config: Optional[dict] = None

    @property
    def lower_bound(self) -> float:
        return self.lb_history[-1] if self.lb_history else 0.0

    @property
    def upper_bound(self) -> float:
        return self.ub_history[-1] if self.ub_history else math.inf

    def to_dict(self) -> dict:
        def num(v):
            return None if not math.isfinite(v) else float(v)

        return {
            "allocations": [
                {"cpu_millicores": float(a.values[0]), "bw_mbps": float(a.values[1])}
                if len(a) == 2 else {"values": a.values.tolist()}
                for a in self.allocations
            ],
            "dual": {"lambda": self.dual.lam.tolist(), "mu": self.dual.mu.tolist()},
            "lb_history": [num(v) for v in self.lb_history],
            "ub_history": [num(v) for v in self.ub_history],
            "feasible": bool(self.feasible),
            "cost": float(self.cost),
            "certified_betas": [float(b) for b in self.certified_betas],
            "outer_iterations": int(self.outer_iterations),
            "inner_iterations": int(self.inner_iterations),
            "wall_time": float(self.wall_time),
            "seed": int(self.seed),
            "restart": int(self.restart),
            "diagnostics": self.diagnostics,
            "config": self.config,
        }

    def to_json(self, indent=2) -> str:
        return json.dumps(self.to_dict(), indent=indent)


SOLUTION_SCHEMA = {
    "type": "object",
    "required": ["allocations", "dual", "lb_history", "ub_history", "feasible", "cost",
                 "certified_betas", "outer_iterations", "inner_iterations", "seed"],
    "properties": {
        "allocations": {"type": "array", "minItems": 1, "items": {"type": "object"}},
        "dual": {
            "type": "object",
            "required": ["lambda", "mu"],
            "properties": {
                "lambda": {"type": "array", "items": {"type": "number", "minimum": 0}},
                "mu": {"type": "array", "items": {"type": "number", "minimum": 0}},
            },
        },
        "lb_history": {"type": "array", "items": {"type": ["number", "null"]}},
        "ub_history": {"type": "array", "items": {"type": ["number", "null"]}},
        "feasible": {"type": "boolean"},
        "cost": {"type": "number", "minimum": 0},
        "certified_betas": {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1}},
        "outer_iterations": {"type": "integer", "minimum": 0},
        "inner_iterations": {"type": "integer", "minimum": 0},
        "seed": {"type": "integer"},
    },
}


# ---- Lagrangians ---------------------------------------------------------

def _as_matrix(problem: Problem, allocations) -> np.ndarray:
    if isinstance(allocations, np.ndarray):
        A = np.asarray(allocations, dtype=np.float64)
    else:
        A = np.array([getattr(a, "values", a) for a in allocations], dtype=np.float64)
    A = A.reshape(problem.n_slices, problem.n_resources)
    return A


def draw_panels(problem: Problem, n_mc: int, rng) -> list:
    return [EpsilonPanel.draw(n_mc, s.traffic.tau, rng) for s in problem.slices]


def _capacity_term(problem: Problem, A, dual: DualState) -> float:
    return float(np.dot(dual.mu, (A.sum(axis=0) - problem.R) / problem.R))


def surrogate_lagrangian(problem: Problem, allocations, dual: DualState, panels,
                         cfg: SurrogateConfig = SurrogateConfig()):
    """Surrogate Lagrangian value and its gradient (raw units, one row per slice)."""
    A = _as_matrix(problem, allocations)
    eta = problem.eta
    value = float(np.sum(A @ eta))
    grad = np.tile(eta, (problem.n_slices, 1))
    for s, (sp, panel) in enumerate(zip(problem.slices, panels)):
        eb = expected_beta(sp.model, sp.traffic, A[s], sp.sla.q_thresh, cfg, "surrogate", panel)
        value += dual.lam[s] * (eb.value - sp.sla.beta_thresh)
        grad[s] += dual.lam[s] * eb.grad
    value += _capacity_term(problem, A, dual)
    grad += dual.mu / problem.R
    return value, grad


def strict_betas(problem: Problem, allocations, panels) -> np.ndarray:
    A = _as_matrix(problem, allocations)
    return np.array([
        expected_beta(sp.model, sp.traffic, A[s], sp.sla.q_thresh, mode="strict", panel=panel).value
        for s, (sp, panel) in enumerate(zip(problem.slices, panels))
    ])


def strict_lagrangian(problem: Problem, allocations, dual: DualState, panels, betas=None) -> float:
    A = _as_matrix(problem, allocations)
    if betas is None:
        betas = strict_betas(problem, A, panels)
    thresh = np.array([sp.sla.beta_thresh for sp in problem.slices])
    return float(np.sum(A @ problem.eta) + np.dot(dual.lam, betas - thresh)
                 + _capacity_term(problem, A, dual))


# ---- primal steps --------------------------------------------------------

def initialize_primal(problem: Problem, cfg: OptimizerConfig, seed, dual: Optional[DualState] = None,
                      panels=None, extra=()):
    """Best of ``n_init`` uniform samples in [0, R] (plus ``extra`` candidates)
    under the current surrogate Lagrangian."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if dual is None:
        dual = DualState.zeros(problem.n_slices, problem.n_resources)
    U = rng.uniform(size=(cfg.n_init, problem.n_slices, problem.n_resources))
    cands = [u * problem.R for u in U] + [_as_matrix(problem, e) for e in extra if e is not None]
    if len(cands) == 1:
        return cands[0]
    if panels is None:
        panels = draw_panels(problem, cfg.surrogate.n_mc, rng)
    values = [surrogate_lagrangian(problem, c, dual, panels, cfg.surrogate)[0] for c in cands]
    return cands[int(np.argmin(values))]


@dataclass
class DescentResult:
    allocations: np.ndarray
    value: float
    iterations: int
    grad_norm: float


def inner_descent(problem: Problem, allocations, dual: DualState, cfg: OptimizerConfig, panels) -> DescentResult:
    R = problem.R
    u = _as_matrix(problem, allocations) / R
    u = np.clip(u, 0.0, 1.0)

    def evaluate(u_):
        v, g = surrogate_lagrangian(problem, u_ * R, dual, panels, cfg.surrogate)
        g = g * R
        if not (math.isfinite(v) and np.all(np.isfinite(g))):
            raise OptimizationError(
                f"non-finite surrogate Lagrangian at r={(u_ * R).tolist()} "
                f"(lambda={dual.lam.tolist()}, mu={dual.mu.tolist()})")
        return v, g

    value, grad = evaluate(u)
    alpha = cfg.alpha1
    pg = math.inf
    it = 0
    while it < cfg.tau2_max:
        pg = float(np.linalg.norm(u - np.clip(u - grad, 0.0, 1.0)))
        if pg <= cfg.eps2:
            break
        it += 1
        trial = np.clip(u - alpha * grad, 0.0, 1.0)
        if np.array_equal(trial, u):
            break
        tv, tg = evaluate(trial)
        if tv > value:
            alpha *= 0.5
            if alpha < 1e-12:
                break
            continue
        u, value, grad = trial, tv, tg
        alpha = min(cfg.alpha1, alpha * 1.25)
    return DescentResult(u * R, value, it, pg)


def outer_update(dual: DualState, problem: Problem, allocations, betas, cfg: OptimizerConfig = OptimizerConfig()) -> DualState:
    A = _as_matrix(problem, allocations)
    thresh = np.array([sp.sla.beta_thresh for sp in problem.slices])
    lam = np.maximum(0.0, dual.lam + cfg.alpha2 * (np.asarray(betas) - thresh))
    mu = np.maximum(0.0, dual.mu + cfg.alpha3 * (A.sum(axis=0) - problem.R) / problem.R)
    return DualState(lam, mu)


def _capacity_ok(problem: Problem, A) -> bool:
    return bool(np.all(A.sum(axis=0) <= problem.R + CAPACITY_TOL))


def _polish(problem: Problem, A, cert_panels, steps: int) -> np.ndarray:
    """Shrink each feasible slice along its ray toward the origin while it
    stays certified feasible (bisection on the scale factor)."""
    out = A.copy()
    for s, (sp, panel) in enumerate(zip(problem.slices, cert_panels)):
        def ok(t):
            return expected_beta(sp.model, sp.traffic, t * A[s], sp.sla.q_thresh,
                                 mode="strict", panel=panel).value <= sp.sla.beta_thresh
        if not np.any(A[s] > 0):
            continue
        lo, hi = 0.0, 1.0
        if ok(lo):
            out[s] = 0.0
            continue
        for _ in range(steps):
            mid = 0.5 * (lo + hi)
            if ok(mid):
                hi = mid
            else:
                lo = mid
        out[s] = hi * A[s]
    return out


def _optimize_once(problem: Problem, cfg: OptimizerConfig, seed: int, restart: int) -> Solution:
    t0 = time.perf_counter()
    ss = np.random.SeedSequence([seed, restart])
    init_rng, panel_rng, cert_rng = (np.random.default_rng(s) for s in ss.spawn(3))
    cert_panels = draw_panels(problem, cfg.n_mc_certify, cert_rng)
    thresh = np.array([sp.sla.beta_thresh for sp in problem.slices])
    eta = problem.eta

    dual = DualState.zeros(problem.n_slices, problem.n_resources)
    lb, ub = 0.0, math.inf
    best = best_betas = None
    lb_hist, ub_hist = [], []
    prev = None
    last = None
    inner_total = 0
    it = 0
    for it in range(1, cfg.tau1_max + 1):
        panels = draw_panels(problem, cfg.surrogate.n_mc, panel_rng)
        r0 = initialize_primal(problem, cfg, init_rng, dual, panels, extra=(prev, best))
        res = inner_descent(problem, r0, dual, cfg, panels)
        inner_total += res.iterations
        A = res.allocations
        last = A

        upd_panels = draw_panels(problem, cfg.n_mc_update, panel_rng)
        betas = strict_betas(problem, A, upd_panels)

        # dual estimate: min of the strict Lagrangian over the points visited
        cand_vals = [strict_lagrangian(problem, A, dual, upd_panels, betas),
                     strict_lagrangian(problem, r0, dual, upd_panels)]
        if best is not None:
            cand_vals.append(strict_lagrangian(problem, best, dual, cert_panels, best_betas))
        lb = max(lb, min(cand_vals))

        dual = outer_update(dual, problem, A, betas, cfg)

        # polishing only shrinks, so it can also pull an over-capacity point back inside
        cert = strict_betas(problem, A, cert_panels)
        if np.all(cert <= thresh):
            if cfg.polish:
                P = _polish(problem, A, cert_panels, cfg.polish_steps)
                cert_p = strict_betas(problem, P, cert_panels)
                if np.all(cert_p <= thresh):
                    A, cert = P, cert_p
            cost = float(np.sum(A @ eta))
            if _capacity_ok(problem, A) and cost < ub:
                ub, best, best_betas = cost, A.copy(), cert
        lb = min(lb, ub)
        lb_hist.append(lb)
        ub_hist.append(ub)
        prev = res.allocations
        if math.isfinite(ub) and (ub <= 0 or (ub - lb) / ub <= cfg.eps1):
            break

    wall = time.perf_counter() - t0
    if best is None:
        betas = strict_betas(problem, last, cert_panels)
        return Solution(
            allocations=[ResourceVector(a) for a in last], dual=dual, lb_history=lb_hist,
            ub_history=ub_hist, feasible=False, cost=float(np.sum(last @ eta)),
            certified_betas=betas.tolist(), outer_iterations=it, inner_iterations=inner_total,
            wall_time=wall, seed=seed, restart=restart,
            diagnostics=(f"no certified-feasible allocation after {it} outer iterations; "
                         f"strict betas {np.round(betas, 4).tolist()} vs thresholds {thresh.tolist()}, "
                         f"capacity use {(last.sum(axis=0) / problem.R).round(4).tolist()}"),
        )
    return Solution(
        allocations=[ResourceVector(a) for a in best], dual=dual, lb_history=lb_hist,
        ub_history=ub_hist, feasible=True, cost=ub, certified_betas=best_betas.tolist(),
        outer_iterations=it, inner_iterations=inner_total, wall_time=wall, seed=seed,
        restart=restart,
    )


def optimize(problem: Problem, cfg: OptimizerConfig = OptimizerConfig()) -> Solution:
    """Run the primal-dual loop ``n_restarts`` times; keep the cheapest feasible run."""
    t0 = time.perf_counter()
    best = None
    for k in range(cfg.n_restarts):
        sol = _optimize_once(problem, cfg, cfg.seed, k)
        if best is None:
            best = sol
        elif sol.feasible and (not best.feasible or sol.cost < best.cost):
            best = sol
        elif not sol.feasible and not best.feasible and sol.cost < best.cost:
            best = sol
    best.wall_time = time.perf_counter() - t0
    best.config = config_to_dict(cfg)
    return best


def config_to_dict(cfg: OptimizerConfig) -> dict:
    d = asdict(cfg)
    return d

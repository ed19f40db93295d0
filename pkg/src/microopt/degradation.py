"""Strict and surrogate QoS degradation and their Monte-Carlo expectations.

Degradation is the traffic-weighted fraction of slots whose QoS is at or
below the threshold. The surrogate swaps the indicator for
``logistic(rho * (q_thresh - q))``, which recovers the indicator as
``rho -> inf``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from . import kernels


@dataclass(frozen=True)
class SurrogateConfig:
    rho: float = 5.0  # per Mbps
    n_mc: int = 64
    seed: int = 0

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError("rho must be > 0")
        if self.n_mc < 1:
            raise ValueError("n_mc must be >= 1")


class EpsilonPanel:
    """Standard-normal draws of shape (n_mc, tau), held fixed for one inner phase."""

    __slots__ = ("values",)

    def __init__(self, values):
        arr = np.array(values, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError("panel must be 2-D (n_mc, tau)")
        arr.setflags(write=False)
        self.values = arr

    @classmethod
    def draw(cls, n_mc: int, tau: int, rng) -> "EpsilonPanel":
        rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        return cls(rng.standard_normal((n_mc, tau)))

    @classmethod
    def zeros(cls, tau: int) -> "EpsilonPanel":
        return cls(np.zeros((1, tau)))

    @property
    def shape(self):
        return self.values.shape


def _weights(traffic, n):
    x = np.asarray(getattr(traffic, "values", traffic), dtype=np.float64)
    if x.shape != (n,):
        raise ValueError(f"length mismatch: {x.size} traffic slots vs {n} QoS values")
    total = x.sum()
    if not total > 0:
        raise ValueError("total traffic must be > 0")
    return x / total


def _traffic(traffic, n):
    x = np.asarray(getattr(traffic, "values", traffic), dtype=np.float64)
    if x.shape != (n,):
        raise ValueError(f"length mismatch: {x.size} traffic slots vs {n} QoS values")
    return x


def beta_strict(traffic, qos, q_thresh: float) -> float:
    """Traffic-weighted share of slots with QoS at or below ``q_thresh``.

    Both sums are correctly rounded, so the result is the float division of
    the exact numerator and denominator.
    """
    q = np.asarray(qos, dtype=np.float64).reshape(-1)
    x = _traffic(traffic, q.size)
    total = math.fsum(x)
    if not total > 0:
        raise ValueError("total traffic must be > 0")
    return math.fsum(x[q <= q_thresh]) / total


def beta_strict_batch(traffic, Q, q_thresh: float) -> np.ndarray:
    """Strict degradation of each row of ``Q`` (shape (m, tau))."""
    Q = np.atleast_2d(np.asarray(Q, dtype=np.float64))
    x = _traffic(traffic, Q.shape[1])
    total = x.sum()
    if not total > 0:
        raise ValueError("total traffic must be > 0")
    return np.where(Q <= q_thresh, x, 0.0).sum(axis=1) / total


def beta_surrogate(traffic, qos, q_thresh: float, rho: float) -> float:
    q = np.asarray(qos, dtype=np.float64).reshape(-1)
    w = _weights(traffic, q.size)
    return float(np.dot(w, kernels.logistic(rho * (q_thresh - q))))


def beta_surrogate_grad(traffic, qos, q_thresh: float, rho: float) -> np.ndarray:
    """d beta_surrogate / d q(t)."""
    q = np.asarray(qos, dtype=np.float64).reshape(-1)
    w = _weights(traffic, q.size)
    s = kernels.logistic(rho * (q_thresh - q))
    return -rho * w * s * (1.0 - s)


class ExpectedBeta(NamedTuple):
    value: float
    grad: Optional[np.ndarray]


def _slot_distribution(model, traffic, r):
    """Model (mu, sigma, dmu, dsigma) per active slot plus slot weights/index."""
    x = np.asarray(getattr(traffic, "values", traffic), dtype=np.float64)
    total = x.sum()
    if not total > 0:
        raise ValueError("total traffic must be > 0")
    active = np.flatnonzero(x > 0)
    xa = x[active]
    uniq, inv = np.unique(xa, return_inverse=True)
    mu, sig, dmu, dsig = model.dist_and_grad(uniq, r)
    return xa / total, active, uniq, inv, mu, sig, dmu, dsig


def expected_beta(model, traffic, r, q_thresh: float, cfg: SurrogateConfig = SurrogateConfig(),
                  mode: str = "surrogate", panel: Optional[EpsilonPanel] = None) -> ExpectedBeta:
    """Monte-Carlo expectation of degradation under the model's QoS distribution.

    Each replicate ``m`` draws ``q_t = mu(x_t, r) + sigma(x_t, r) * panel[m, t]``.
    In surrogate mode the pathwise gradient with respect to ``r`` is returned.
    """
    if mode not in ("strict", "surrogate"):
        raise ValueError(f"unknown mode {mode!r}")
    tau = len(getattr(traffic, "values", traffic))
    if panel is None:
        panel = EpsilonPanel.draw(cfg.n_mc, tau, cfg.seed)
    P = panel.values
    if P.shape[1] != tau:
        raise ValueError(f"panel has {P.shape[1]} slots, traffic has {tau}")
    w, active, uniq, inv, mu, sig, dmu, dsig = _slot_distribution(model, traffic, r)
    Pa = P[:, active] if active.size != tau else P
    mu_t, sig_t = mu[inv], sig[inv]
    if mode == "strict":
        # the weights sum to 1 only up to rounding
        value = kernels.strict_reduce(mu_t, sig_t, w, Pa, q_thresh)
        return ExpectedBeta(min(1.0, max(0.0, value)), None)
    value, A, B = kernels.surrogate_reduce(mu_t, sig_t, w, Pa, q_thresh, cfg.rho)
    cA = np.bincount(inv, weights=w * A, minlength=uniq.size)
    cB = np.bincount(inv, weights=w * B, minlength=uniq.size)
    grad = -cfg.rho * (cA @ dmu + cB @ dsig)
    return ExpectedBeta(value, grad)

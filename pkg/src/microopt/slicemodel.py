"""Gaussian-output feed-forward slice model.

Maps (traffic, resources) to the mean and standard deviation of the QoS
distribution. Trained by minimizing the Gaussian negative log-likelihood;
inputs are standardized with statistics frozen from the training split so the
function stays stationary at inference time.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .oracle import QoSDataset

MODEL_VERSION = "microopt-model-v1"
HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


class ModelFormatError(ValueError):
    """Raised when a model file cannot be decoded."""


@dataclass(frozen=True)
class ModelArch:
    n_resources: int = 2
    shared_layers: tuple = (16, 16, 16)
    mean_hidden: tuple = (16,)
    std_hidden: tuple = (16,)

    def __post_init__(self):
        object.__setattr__(self, "shared_layers", tuple(int(u) for u in self.shared_layers))
        object.__setattr__(self, "mean_hidden", tuple(int(u) for u in self.mean_hidden))
        object.__setattr__(self, "std_hidden", tuple(int(u) for u in self.std_hidden))
        if self.n_resources < 1:
            raise ValueError("n_resources must be >= 1")
        if any(u < 1 for u in self.shared_layers + self.mean_hidden + self.std_hidden):
            raise ValueError("layer widths must be >= 1")

    @property
    def input_dim(self) -> int:
        return 1 + self.n_resources


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 3000
    learning_rate: float = 0.01
    lr_decay_epoch: int = 1500
    lr_decay_factor: float = 0.1
    batch_size: int = 256
    optimizer: str = "sgd"  # sgd | momentum | adam
    momentum: float = 0.9
    clip_norm: float = 1.0  # global gradient-norm cap; 0 disables
    seed: int = 0

    def __post_init__(self):
        if self.clip_norm < 0:
            raise ValueError("clip_norm must be >= 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.optimizer not in ("sgd", "momentum", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


HISTORY_KEYS = ("train_nll", "train_mse", "validation_nll", "validation_mse")


@dataclass
class SliceModel:
    arch: ModelArch
    shared: list
    mean_branch: list
    std_branch: list
    in_mean: np.ndarray
    in_std: np.ndarray
    history: dict = field(default_factory=lambda: {k: [] for k in HISTORY_KEYS})

    # ---- inference -------------------------------------------------------

    def _features(self, x, r) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        r = np.asarray(getattr(r, "values", r), dtype=np.float64)
        if r.ndim == 1:
            r = np.broadcast_to(r, (x.size, r.size))
        X = np.column_stack([x, r])
        if X.shape[1] != self.arch.input_dim:
            raise ValueError(f"expected {self.arch.n_resources} resources, got {X.shape[1] - 1}")
        if not np.all(np.isfinite(X)):
            raise ValueError("model inputs must be finite")
        return X

    def dist_and_grad(self, x, r):
        """(mu, sigma, dmu/dr, dsigma/dr) for a batch of traffic values at one allocation."""
        X = self._features(x, r)
        mu, sig, dmu, dsig = kernels.mlp_dist_grad(
            X, self.in_mean, self.in_std, self.shared, self.mean_branch, self.std_branch)
        return mu, sig, dmu[:, 1:], dsig[:, 1:]

    def predict_batch(self, X):
        X = np.asarray(X, dtype=np.float64)
        if not np.all(np.isfinite(X)):
            raise ValueError("model inputs must be finite")
        mu, pre = _forward(self, X)[:2]
        return mu, kernels.softplus(pre)

    def copy(self) -> "SliceModel":
        return SliceModel(
            arch=self.arch,
            shared=[(W.copy(), b.copy()) for W, b in self.shared],
            mean_branch=[(W.copy(), b.copy()) for W, b in self.mean_branch],
            std_branch=[(W.copy(), b.copy()) for W, b in self.std_branch],
            in_mean=self.in_mean.copy(),
            in_std=self.in_std.copy(),
            history={k: list(v) for k, v in self.history.items()},
        )

    def groups(self):
        return (self.shared, self.mean_branch, self.std_branch)


def init_model(arch: ModelArch = ModelArch(), seed: int = 0) -> SliceModel:
    """Fan-in scaled uniform initialization (bias zero), deterministic per seed."""
    rng = np.random.default_rng(seed)

    def make(fan_in, widths):
        layers = []
        for w in widths:
            bound = 1.0 / math.sqrt(fan_in)
            layers.append((rng.uniform(-bound, bound, size=(fan_in, w)), np.zeros(w)))
            fan_in = w
        return layers

    shared = make(arch.input_dim, arch.shared_layers)
    trunk = arch.shared_layers[-1]
    mean_branch = make(trunk, arch.mean_hidden + (1,))
    std_branch = make(trunk, arch.std_hidden + (1,))
    return SliceModel(arch, shared, mean_branch, std_branch,
                      in_mean=np.zeros(arch.input_dim), in_std=np.ones(arch.input_dim))


# ---- forward / backward over a batch (training path) ---------------------

def _forward(model: SliceModel, X):
    h = (X - model.in_mean) / model.in_std
    acts = [h]
    for W, b in model.shared:
        h = np.maximum(h @ W + b, 0.0)
        acts.append(h)
    trunk = h

    def branch(layers):
        hb = trunk
        ba = [hb]
        for W, b in layers[:-1]:
            hb = np.maximum(hb @ W + b, 0.0)
            ba.append(hb)
        W, b = layers[-1]
        return (hb @ W + b)[:, 0], ba

    mu, mean_acts = branch(model.mean_branch)
    pre, std_acts = branch(model.std_branch)
    return mu, pre, acts, mean_acts, std_acts


def _nll_terms(q, mu, sigma):
    z = (q - mu) / sigma
    return HALF_LOG_2PI + np.log(sigma) + 0.5 * z * z


def _backward(model: SliceModel, cache, d_mu, d_pre):
    """Parameter gradients given dLoss/dmu and dLoss/d(std pre-activation)."""
    _, _, acts, mean_acts, std_acts = cache

    def branch(layers, bacts, seed):
        grads = [None] * len(layers)
        g = seed[:, None]
        for i in range(len(layers) - 1, -1, -1):
            W, _ = layers[i]
            a_in = bacts[i]
            grads[i] = (a_in.T @ g, g.sum(axis=0))
            g = g @ W.T
            if i > 0:
                g = g * (a_in > 0)
        return grads, g

    gm, g_trunk_m = branch(model.mean_branch, mean_acts, d_mu)
    gs, g_trunk_s = branch(model.std_branch, std_acts, d_pre)
    g = (g_trunk_m + g_trunk_s) * (acts[-1] > 0)
    gsh = [None] * len(model.shared)
    for i in range(len(model.shared) - 1, -1, -1):
        W, _ = model.shared[i]
        a_in = acts[i]
        gsh[i] = (a_in.T @ g, g.sum(axis=0))
        if i > 0:
            g = (g @ W.T) * (a_in > 0)
    return gsh, gm, gs


def _loss_and_grads(model: SliceModel, X, q):
    """Mean NLL of a batch, its parameter gradients, and the summed squared error."""
    cache = _forward(model, X)
    mu, pre = cache[0], cache[1]
    sigma = kernels.softplus(pre)
    n = q.size
    resid = q - mu
    inv_var = 1.0 / (sigma * sigma)
    loss = float(np.mean(_nll_terms(q, mu, sigma)))
    d_mu = -resid * inv_var / n
    d_sigma = (1.0 / sigma - resid * resid * inv_var / sigma) / n
    d_pre = d_sigma * kernels.logistic(pre)
    return loss, _backward(model, cache, d_mu, d_pre), float(resid @ resid)


# ---- public operations ---------------------------------------------------

def predict_dist(model, x: float, r) -> tuple:
    """Mean and std (Mbps) of the predicted QoS at one (traffic, allocation)."""
    if not np.isfinite(x):
        raise ValueError("model inputs must be finite")
    mu, sig, _, _ = model.dist_and_grad(np.array([float(x)]), r)
    return float(mu[0]), float(sig[0])


def nll_loss(model: SliceModel, x, r, q) -> float:
    """Mean Gaussian negative log-likelihood (nats) of a batch."""
    q = np.atleast_1d(np.asarray(q, dtype=np.float64))
    if q.size == 0:
        raise ValueError("batch is empty")
    X = np.column_stack([np.atleast_1d(x), np.atleast_2d(r) if np.ndim(r) > 1 else
                         np.broadcast_to(np.asarray(r, dtype=np.float64), (q.size, np.size(r)))])
    mu, sigma = model.predict_batch(X)
    return float(np.mean(_nll_terms(q, mu, sigma)))


def sample_qos_reparam(model, x: float, r, eps: float) -> float:
    if not np.isfinite(eps):
        raise ValueError("eps must be finite")
    mu, sigma = predict_dist(model, x, r)
    return mu + sigma * eps


def grad_qos_wrt_r(model, x: float, r, eps: float) -> np.ndarray:
    """d(mu + sigma * eps)/dr for a fixed standard-normal draw ``eps``."""
    _, _, dmu, dsig = model.dist_and_grad(np.array([float(x)]), r)
    return dmu[0] + eps * dsig[0]


def activation_pattern(model: SliceModel, X) -> np.ndarray:
    """Boolean ReLU on/off pattern per row; the network is affine wherever it is constant."""
    _, _, acts, mean_acts, std_acts = _forward(model, np.atleast_2d(np.asarray(X, dtype=np.float64)))
    return np.hstack([a > 0 for a in acts[1:] + mean_acts[1:] + std_acts[1:]])


def model_metrics(model: SliceModel, data: QoSDataset) -> tuple:
    """(NLL, MSE, MAE) of the predicted mean against observations."""
    if len(data) == 0:
        raise ValueError("split is empty")
    mu, sigma = model.predict_batch(data.features())
    resid = data.q - mu
    return (float(np.mean(_nll_terms(data.q, mu, sigma))),
            float(np.mean(resid * resid)),
            float(np.mean(np.abs(resid))))


def _stats(X):
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std[std == 0] = 1.0
    return mean, std


def train(model: SliceModel, data: QoSDataset, cfg: TrainConfig = TrainConfig()) -> SliceModel:
    """Fit by mini-batch gradient descent on the NLL; returns a new model.

    Normalization statistics are computed from the training split and frozen.
    Per-epoch NLL and MSE are appended to ``history``: the train figures are
    running averages over the epoch's mini-batches, validation is a full pass
    at the end of the epoch.
    """
    if not data.has_split("train") or not data.has_split("validation"):
        raise ValueError("dataset must contain train and validation splits")
    out = model.copy()
    if cfg.epochs == 0:
        return out
    tr, va = data.subset("train"), data.subset("validation")
    Xtr, qtr = tr.features(), tr.q
    out.in_mean, out.in_std = _stats(Xtr)
    rng = np.random.default_rng(cfg.seed)

    params = [p for group in out.groups() for layer in group for p in layer]
    state = [np.zeros_like(p) for p in params]
    state2 = [np.zeros_like(p) for p in params]
    step = 0
    n = qtr.size
    bs = min(cfg.batch_size, n)
    for epoch in range(cfg.epochs):
        lr = cfg.learning_rate * (cfg.lr_decay_factor if epoch >= cfg.lr_decay_epoch else 1.0)
        order = rng.permutation(n)
        nll_sum = sse = 0.0
        for start in range(0, n, bs):
            idx = order[start:start + bs]
            loss, (gsh, gm, gs), batch_sse = _loss_and_grads(out, Xtr[idx], qtr[idx])
            nll_sum += loss * idx.size
            sse += batch_sse
            grads = [g for group in (gsh, gm, gs) for layer in group for g in layer]
            if cfg.clip_norm > 0:
                norm = math.sqrt(sum(float(np.vdot(g, g)) for g in grads))
                if norm > cfg.clip_norm:
                    grads = [g * (cfg.clip_norm / norm) for g in grads]
            step += 1
            for p, g, m1, m2 in zip(params, grads, state, state2):
                if cfg.optimizer == "sgd":
                    p -= lr * g
                elif cfg.optimizer == "momentum":
                    m1 *= cfg.momentum
                    m1 += g
                    p -= lr * m1
                else:
                    m1 *= 0.9
                    m1 += 0.1 * g
                    m2 *= 0.999
                    m2 += 0.001 * g * g
                    mhat = m1 / (1 - 0.9 ** step)
                    vhat = m2 / (1 - 0.999 ** step)
                    p -= lr * mhat / (np.sqrt(vhat) + 1e-8)
        nll_v, mse_v, _ = model_metrics(out, va)
        out.history["train_nll"].append(nll_sum / n)
        out.history["train_mse"].append(sse / n)
        out.history["validation_nll"].append(nll_v)
        out.history["validation_mse"].append(mse_v)
    return out


# ---- persistence ---------------------------------------------------------

def _layers_to_json(layers):
    return [{"shape": list(W.shape), "W": W.reshape(-1).tolist(), "b": b.tolist()} for W, b in layers]


def _layers_from_json(doc, name):
    try:
        out = []
        for i, layer in enumerate(doc):
            shape = tuple(int(s) for s in layer["shape"])
            W = np.array(layer["W"], dtype=np.float64)
            b = np.array(layer["b"], dtype=np.float64)
            if W.size != shape[0] * shape[1] or b.size != shape[1]:
                raise ModelFormatError(f"{name}[{i}]: weight shape mismatch")
            out.append((W.reshape(shape), b))
        return out
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ModelFormatError):
            raise
        raise ModelFormatError(f"{name}: {exc}") from None


def model_to_dict(model: SliceModel) -> dict:
    return {
        "version": MODEL_VERSION,
        "arch": {
            "n_resources": model.arch.n_resources,
            "shared_layers": list(model.arch.shared_layers),
            "mean_hidden": list(model.arch.mean_hidden),
            "std_hidden": list(model.arch.std_hidden),
        },
        "normalization": {"mean": model.in_mean.tolist(), "std": model.in_std.tolist()},
        "shared": _layers_to_json(model.shared),
        "mean_branch": _layers_to_json(model.mean_branch),
        "std_branch": _layers_to_json(model.std_branch),
        "history": {k: list(model.history.get(k, [])) for k in HISTORY_KEYS},
    }


def model_from_dict(doc: dict) -> SliceModel:
    if not isinstance(doc, dict):
        raise ModelFormatError("model document must be a JSON object")
    version = doc.get("version")
    if version != MODEL_VERSION:
        raise ModelFormatError(f"incompatible model version {version!r}, expected {MODEL_VERSION!r}")
    for key in ("arch", "normalization", "shared", "mean_branch", "std_branch"):
        if key not in doc:
            raise ModelFormatError(f"missing field {key!r}")
    try:
        arch = ModelArch(**doc["arch"])
    except TypeError as exc:
        raise ModelFormatError(f"arch: {exc}") from None
    try:
        in_mean = np.array(doc["normalization"]["mean"], dtype=np.float64)
        in_std = np.array(doc["normalization"]["std"], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"normalization: {exc}") from None
    if in_mean.shape != (arch.input_dim,) or in_std.shape != (arch.input_dim,):
        raise ModelFormatError("normalization: wrong dimension")
    history = {k: [float(v) for v in doc.get("history", {}).get(k, [])] for k in HISTORY_KEYS}
    return SliceModel(
        arch=arch,
        shared=_layers_from_json(doc["shared"], "shared"),
        mean_branch=_layers_from_json(doc["mean_branch"], "mean_branch"),
        std_branch=_layers_from_json(doc["std_branch"], "std_branch"),
        in_mean=in_mean,
        in_std=in_std,
        history=history,
    )


def export_model(model: SliceModel, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model)))


def import_model(path) -> SliceModel:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"malformed model file: {exc}") from None
    return model_from_dict(doc)

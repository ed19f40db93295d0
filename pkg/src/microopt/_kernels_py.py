"""Pure numpy implementations of the hot kernels.

Same signatures and semantics as the compiled ``_kernels`` module; used when
the extension is not built or ``MICROOPT_PURE_PYTHON`` is set.
"""

import numpy as np

BACKEND = "python"


def logistic(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softplus(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    big = z > 30.0
    out[big] = z[big]
    out[~big] = np.log1p(np.exp(z[~big]))
    return out


def mlp_dist_grad(X, in_mean, in_std, shared, mean_branch, std_branch):
    """Forward pass plus input gradients of a two-headed Gaussian MLP.

    ``shared``/``mean_branch``/``std_branch`` are sequences of ``(W, b)`` with
    ``W`` shaped (fan_in, fan_out). Hidden layers use ReLU; the last layer of
    each branch is linear (mean) or softplus (std).

    Returns ``mu (n,), sigma (n,), dmu (n, d), dsigma (n, d)`` where the
    gradients are with respect to the raw (unstandardized) inputs.
    """
    X = np.asarray(X, dtype=np.float64)
    h = (X - in_mean) / in_std
    masks = []
    for W, b in shared:
        z = h @ W + b
        m = z > 0
        masks.append(m)
        h = np.where(m, z, 0.0)
    trunk = h

    def branch(layers):
        hb = trunk
        bm = []
        for W, b in layers[:-1]:
            z = hb @ W + b
            m = z > 0
            bm.append(m)
            hb = np.where(m, z, 0.0)
        W, b = layers[-1]
        return hb @ W[:, 0] + b[0], bm

    mu, mu_masks = branch(mean_branch)
    s_pre, s_masks = branch(std_branch)
    sigma = softplus(s_pre)

    def back(layers, bmasks, seed):
        # seed: (n,) d(out)/d(pre-activation of head)
        g = seed[:, None] * layers[-1][0][:, 0][None, :]
        for (W, _), m in zip(reversed(layers[:-1]), reversed(bmasks)):
            g = (g * m) @ W.T
        for (W, _), m in zip(reversed(shared), reversed(masks)):
            g = (g * m) @ W.T
        return g / in_std

    n = X.shape[0]
    dmu = back(mean_branch, mu_masks, np.ones(n))
    dsig = back(std_branch, s_masks, logistic(s_pre))
    return mu, sigma, dmu, dsig


def surrogate_reduce(mu, sig, w, panel, q_thresh, rho):
    """Monte-Carlo surrogate degradation over an epsilon panel.

    value = mean_m sum_t w_t * logistic(rho * (q_thresh - mu_t - sig_t * eps_mt))

    Also returns per-slot ``A_t = mean_m s'`` and ``B_t = mean_m s' * eps``
    (``s' = s (1 - s)``) from which the gradient is assembled by the caller.
    """
    q = mu[None, :] + sig[None, :] * panel
    s = logistic(rho * (q_thresh - q))
    ds = s * (1.0 - s)
    m = panel.shape[0]
    value = float((s @ w).sum() / m)
    A = ds.sum(axis=0) / m
    B = (ds * panel).sum(axis=0) / m
    return value, A, B


def strict_reduce(mu, sig, w, panel, q_thresh):
    q = mu[None, :] + sig[None, :] * panel
    deg = (q <= q_thresh).astype(np.float64)
    return float((deg @ w).sum() / panel.shape[0])

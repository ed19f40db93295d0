"""Finite-difference helpers shared by the gradient tests."""

import numpy as np

from microopt.slicemodel import activation_pattern

# central-difference step per resource: 1e-3 of the resource scale
FD_STEPS = np.array([1e-3 * 4500.0, 1e-3 * 50.0])


def fd_steps(model) -> np.ndarray:
    """1e-3 of the model's input spread for each resource column."""
    return 1e-3 * np.asarray(model.in_std[1:], dtype=np.float64)


def smooth_around(model, xs, r, steps=FD_STEPS) -> bool:
    """True when no ReLU switches inside the finite-difference box around ``r``.

    Outside that case the network is affine on the box and central
    differences are exact up to rounding.
    """
    xs = np.atleast_1d(np.asarray(xs, dtype=np.float64))
    rows = [r]
    for k, h in enumerate(steps):
        e = np.zeros_like(r)
        e[k] = h
        rows += [r + e, r - e]
    X = np.vstack([np.column_stack([xs, np.broadcast_to(p, (xs.size, p.size))]) for p in rows])
    pat = activation_pattern(model, X).reshape(len(rows), xs.size, -1)
    return bool(np.all(pat == pat[0]))


def central_diff(f, r, steps=FD_STEPS) -> np.ndarray:
    g = np.zeros(r.size)
    for k, h in enumerate(steps):
        e = np.zeros_like(r)
        e[k] = h
        g[k] = (f(r + e) - f(r - e)) / (2 * h)
    return g


def close(analytic, fd, rel=1e-3, floor=1e-6) -> bool:
    return bool(np.all(np.abs(analytic - fd) <= np.maximum(rel * np.abs(fd), floor)))

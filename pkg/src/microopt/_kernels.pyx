# cython: language_level=3, boundscheck=False, wraparound=True, cdivision=True, initializedcheck=False
"""Compiled hot kernels; mirrors ``_kernels_py`` exactly in semantics."""

cimport cython
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log1p

cnp.import_array()

BACKEND = "cython"


cdef inline double _logistic(double z) nogil:
    cdef double e
    if z >= 0:
        return 1.0 / (1.0 + exp(-z))
    e = exp(z)
    return e / (1.0 + e)


cdef inline double _softplus(double z) nogil:
    if z > 30.0:
        return z
    return log1p(exp(z))


@cython.wraparound(False)
cdef void _dense(const double[:, ::1] H, const double[:, ::1] W, const double[::1] b,
                 double[:, ::1] Z, bint relu) nogil:
    cdef Py_ssize_t n = H.shape[0], fi = W.shape[0], fo = W.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double acc, h
    for i in range(n):
        for j in range(fo):
            Z[i, j] = b[j]
        for k in range(fi):
            h = H[i, k]
            if h != 0.0:
                for j in range(fo):
                    Z[i, j] += h * W[k, j]
        if relu:
            for j in range(fo):
                if Z[i, j] < 0.0:
                    Z[i, j] = 0.0


@cython.wraparound(False)
cdef void _back(const double[:, ::1] G, const double[:, ::1] W, const double[:, ::1] A,
                double[:, ::1] Gout) nogil:
    # Gout = (G * (A > 0)) @ W.T, with A the layer's own (post-ReLU) output
    cdef Py_ssize_t n = G.shape[0], fi = W.shape[0], fo = W.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double acc
    for i in range(n):
        for k in range(fi):
            acc = 0.0
            for j in range(fo):
                if A[i, j] > 0.0:
                    acc = acc + G[i, j] * W[k, j]
            Gout[i, k] = acc


def _c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def mlp_dist_grad(X, in_mean, in_std, shared, mean_branch, std_branch):
    cdef const double[:, ::1] Xv = _c(X)
    cdef const double[::1] mv = _c(in_mean), sv = _c(in_std)
    cdef Py_ssize_t n = Xv.shape[0], d = Xv.shape[1], i, k
    H0 = np.empty((n, d))
    cdef double[:, ::1] h0 = H0
    for i in range(n):
        for k in range(d):
            h0[i, k] = (Xv[i, k] - mv[k]) / sv[k]

    sh = [(_c(W), _c(b)) for W, b in shared]
    mb = [(_c(W), _c(b)) for W, b in mean_branch]
    sb = [(_c(W), _c(b)) for W, b in std_branch]

    acts = [H0]
    for W, b in sh:
        Z = np.empty((n, W.shape[1]))
        _dense(acts[-1], W, b, Z, True)
        acts.append(Z)
    trunk = acts[-1]

    def fwd(layers):
        ba = [trunk]
        for W, b in layers[:-1]:
            Z = np.empty((n, W.shape[1]))
            _dense(ba[-1], W, b, Z, True)
            ba.append(Z)
        W, b = layers[-1]
        Z = np.empty((n, 1))
        _dense(ba[-1], W, b, Z, False)
        return Z[:, 0].copy(), ba

    mu, m_acts = fwd(mb)
    pre, s_acts = fwd(sb)
    sigma = np.empty(n)
    seed_s = np.empty(n)
    cdef double[::1] prev = pre, sigv = sigma, seedv = seed_s
    for i in range(n):
        sigv[i] = _softplus(prev[i])
        seedv[i] = _logistic(prev[i])

    def back(layers, bacts, seed):
        W = layers[-1][0]
        G = np.ascontiguousarray(seed[:, None] * W[:, 0][None, :])
        for li in range(len(layers) - 2, -1, -1):
            Wl = layers[li][0]
            Gn = np.empty((n, Wl.shape[0]))
            _back(G, Wl, bacts[li + 1], Gn)
            G = Gn
        for li in range(len(sh) - 1, -1, -1):
            Wl = sh[li][0]
            Gn = np.empty((n, Wl.shape[0]))
            _back(G, Wl, acts[li + 1], Gn)
            G = Gn
        return G

    ones = np.ones(n)
    dmu = back(mb, m_acts, ones)
    dsig = back(sb, s_acts, seed_s)
    std = np.asarray(in_std, dtype=np.float64)
    return mu, sigma, dmu / std, dsig / std


def surrogate_reduce(mu, sig, w, panel, double q_thresh, double rho):
    cdef const double[::1] muv = _c(mu), sgv = _c(sig), wv = _c(w)
    cdef const double[:, ::1] P = _c(panel)
    cdef Py_ssize_t M = P.shape[0], T = P.shape[1], m, t
    A = np.zeros(T)
    B = np.zeros(T)
    cdef double[::1] Av = A, Bv = B
    cdef double value = 0.0, row, s, ds, e
    with nogil:
        for m in range(M):
            row = 0.0
            for t in range(T):
                e = P[m, t]
                s = _logistic(rho * (q_thresh - muv[t] - sgv[t] * e))
                ds = s * (1.0 - s)
                row = row + wv[t] * s
                Av[t] += ds
                Bv[t] += ds * e
            value = value + row
        for t in range(T):
            Av[t] /= M
            Bv[t] /= M
    return value / M, A, B


def strict_reduce(mu, sig, w, panel, double q_thresh):
    cdef const double[::1] muv = _c(mu), sgv = _c(sig), wv = _c(w)
    cdef const double[:, ::1] P = _c(panel)
    cdef Py_ssize_t M = P.shape[0], T = P.shape[1], m, t
    cdef double value = 0.0, row
    with nogil:
        for m in range(M):
            row = 0.0
            for t in range(T):
                if muv[t] + sgv[t] * P[m, t] <= q_thresh:
                    row = row + wv[t]
            value = value + row
    return value / M

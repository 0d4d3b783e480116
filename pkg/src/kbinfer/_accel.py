"""Numba-compiled hot kernels.

Pairwise density matrices and the preimage fixed-point iteration dominate
the non-BLAS runtime of the experiment drivers.  Each function here has a
pure-numpy twin in ``_backend``; the active implementation is chosen there
via the ``KB_BACKEND`` environment variable.

All loops are single-threaded on purpose: entries are independent, results
must be bit-reproducible, and replicate-level threading happens above this
layer (the kernels release the GIL).
"""

import numpy as np
from numba import njit

_JIT = dict(cache=True, nogil=True)


@njit(**_JIT)
def gauss_pair(za, zb, norm_const):
    # za, zb are whitened coordinates: entry = nc * exp(-0.5 ||za_i - zb_j||^2)
    na, d = za.shape
    nb = zb.shape[0]
    out = np.empty((na, nb))
    for i in range(na):
        for j in range(nb):
            s = 0.0
            for k in range(d):
                t = za[i, k] - zb[j, k]
                s += t * t
            out[i, j] = norm_const * np.exp(-0.5 * s)
    return out


@njit(**_JIT)
def gauss_pair_sym(za, norm_const):
    # upper triangle computed once and mirrored: exact symmetry by construction
    n, d = za.shape
    out = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            s = 0.0
            for k in range(d):
                t = za[i, k] - za[j, k]
                s += t * t
            v = norm_const * np.exp(-0.5 * s)
            out[i, j] = v
            out[j, i] = v
    return out


@njit(**_JIT)
def laplace_pair(a, b, lam):
    na = a.shape[0]
    nb = b.shape[0]
    out = np.empty((na, nb))
    for i in range(na):
        for j in range(nb):
            out[i, j] = 0.5 * lam * np.exp(-lam * abs(a[i] - b[j]))
    return out


@njit(**_JIT)
def laplace_pair_sym(a, lam):
    n = a.shape[0]
    out = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            v = 0.5 * lam * np.exp(-lam * abs(a[i] - a[j]))
            out[i, j] = v
            out[j, i] = v
    return out


@njit(**_JIT)
def cauchy_pair(a, b, sigma):
    na = a.shape[0]
    nb = b.shape[0]
    out = np.empty((na, nb))
    for i in range(na):
        for j in range(nb):
            t = a[i] - b[j]
            out[i, j] = sigma / (np.pi * (t * t + sigma * sigma))
    return out


@njit(**_JIT)
def cauchy_pair_sym(a, sigma):
    n = a.shape[0]
    out = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            t = a[i] - a[j]
            v = sigma / (np.pi * (t * t + sigma * sigma))
            out[i, j] = v
            out[j, i] = v
    return out


@njit(**_JIT)
def laplace_smoothed_pair(evals, locs, lam, lam0, equal_rates):
    # Laplace noise smoothed by a Laplace kernel of rate lam0, evaluated at
    # |evals_i - locs_j|.  Two branches: distinct rates and the confluent
    # equal-rate limit.
    n = evals.shape[0]
    m = locs.shape[0]
    out = np.empty((n, m))
    if equal_rates:
        for i in range(n):
            for j in range(m):
                u = abs(evals[i] - locs[j])
                out[i, j] = 0.25 * lam0 * (1.0 + lam0 * u) * np.exp(-lam0 * u)
    else:
        c = lam0 * lam / (2.0 * (lam * lam - lam0 * lam0))
        for i in range(n):
            for j in range(m):
                u = abs(evals[i] - locs[j])
                out[i, j] = c * (lam * np.exp(-lam0 * u) - lam0 * np.exp(-lam * u))
    return out


@njit(**_JIT)
def preimage_iterate(anchors, weights, chol, x0, tol, max_iter):
    """Guarded fixed-point iteration maximizing sum_i w_i k(x, X_i).

    ``chol`` is the lower Cholesky factor of the kernel covariance.  Returns
    (x, surrogate, iterations, ok); ok is False when the weight-density
    denominator underflows at the start.
    """
    n, d = anchors.shape
    x = x0.copy()
    num = np.empty(d)
    z = np.empty(d)

    def _pass(xc, num_out):
        den = 0.0
        for k in range(d):
            num_out[k] = 0.0
        for i in range(n):
            # forward substitution: solve chol @ z = xc - X_i
            for r in range(d):
                acc = xc[r] - anchors[i, r]
                for c in range(r):
                    acc -= chol[r, c] * z[c]
                z[r] = acc / chol[r, r]
            s = 0.0
            for r in range(d):
                s += z[r] * z[r]
            ci = weights[i] * np.exp(-0.5 * s)
            den += ci
            for r in range(d):
                num_out[r] += ci * anchors[i, r]
        return den

    den = _pass(x, num)
    surrogate = den
    it = 0
    while it < max_iter:
        it += 1
        if abs(den) < 1e-300:
            if it == 1:
                return x, surrogate, it, False
            break
        step = 0.0
        x_new = num / den
        den_new = _pass(x_new, num)
        if den_new < surrogate:
            # accepting would increase the preimage objective; stop
            break
        for r in range(d):
            t = x_new[r] - x[r]
            step += t * t
        x = x_new
        den = den_new
        surrogate = den_new
        if np.sqrt(step) < tol:
            break
    return x, surrogate, it, True

"""Backend selection for the hot kernels.

``KB_BACKEND`` picks the implementation:

* ``auto`` (default): numba when importable, else numpy
* ``numba``: require the compiled kernels, fail otherwise
* ``numpy``: force the pure-numpy path

Both paths are exported explicitly (``*_numpy`` and, when available, the
``_accel`` module) so tests and benchmarks can compare them directly.
"""

import os
import warnings

import numpy as np

__all__ = [
    "active_backend",
    "gauss_pair",
    "gauss_pair_sym",
    "laplace_pair",
    "laplace_pair_sym",
    "cauchy_pair",
    "cauchy_pair_sym",
    "laplace_smoothed_pair",
    "preimage_iterate",
]

_CHOICE = os.environ.get("KB_BACKEND", "auto").strip().lower()
if _CHOICE not in ("auto", "numba", "numpy"):
    raise RuntimeError(
        f"KB_BACKEND must be one of auto|numba|numpy, got {_CHOICE!r}"
    )

_accel = None
if _CHOICE in ("auto", "numba"):
    try:
        from . import _accel as _accel_module

        _accel = _accel_module
    except ImportError as exc:
        if _CHOICE == "numba":
            raise RuntimeError(f"KB_BACKEND=numba but numba is unavailable: {exc}")
        warnings.warn(f"numba unavailable, falling back to numpy kernels: {exc}")


def active_backend():
    return "numba" if _accel is not None else "numpy"


# ---------------------------------------------------------------------------
# numpy reference implementations
# ---------------------------------------------------------------------------

def _sqdist(za, zb):
    aa = np.einsum("ij,ij->i", za, za)
    bb = np.einsum("ij,ij->i", zb, zb)
    sq = aa[:, None] + bb[None, :] - 2.0 * (za @ zb.T)
    np.maximum(sq, 0.0, out=sq)
    return sq


def gauss_pair_numpy(za, zb, norm_const):
    return norm_const * np.exp(-0.5 * _sqdist(za, zb))


def gauss_pair_sym_numpy(za, norm_const):
    full = gauss_pair_numpy(za, za, norm_const)
    upper = np.triu(full)
    return upper + np.triu(full, 1).T


def laplace_pair_numpy(a, b, lam):
    return 0.5 * lam * np.exp(-lam * np.abs(a[:, None] - b[None, :]))


def laplace_pair_sym_numpy(a, lam):
    full = laplace_pair_numpy(a, a, lam)
    upper = np.triu(full)
    return upper + np.triu(full, 1).T


def cauchy_pair_numpy(a, b, sigma):
    diff = a[:, None] - b[None, :]
    return sigma / (np.pi * (diff * diff + sigma * sigma))


def cauchy_pair_sym_numpy(a, sigma):
    full = cauchy_pair_numpy(a, a, sigma)
    upper = np.triu(full)
    return upper + np.triu(full, 1).T


def laplace_smoothed_pair_numpy(evals, locs, lam, lam0, equal_rates):
    u = np.abs(evals[:, None] - locs[None, :])
    if equal_rates:
        return 0.25 * lam0 * (1.0 + lam0 * u) * np.exp(-lam0 * u)
    c = lam0 * lam / (2.0 * (lam * lam - lam0 * lam0))
    return c * (lam * np.exp(-lam0 * u) - lam0 * np.exp(-lam * u))


def preimage_iterate_numpy(anchors, weights, chol, x0, tol, max_iter):
    from scipy.linalg import solve_triangular

    def _pass(xc):
        z = solve_triangular(chol, (xc[None, :] - anchors).T, lower=True)
        c = weights * np.exp(-0.5 * np.einsum("ij,ij->j", z, z))
        return float(c.sum()), c @ anchors

    x = np.array(x0, dtype=float)
    den, num = _pass(x)
    surrogate = den
    it = 0
    while it < max_iter:
        it += 1
        if abs(den) < 1e-300:
            if it == 1:
                return x, surrogate, it, False
            break
        x_new = num / den
        den_new, num_new = _pass(x_new)
        if den_new < surrogate:
            break
        step = float(np.linalg.norm(x_new - x))
        x, den, num, surrogate = x_new, den_new, num_new, den_new
        if step < tol:
            break
    return x, surrogate, it, True


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

if _accel is not None:
    gauss_pair = _accel.gauss_pair
    gauss_pair_sym = _accel.gauss_pair_sym
    laplace_pair = _accel.laplace_pair
    laplace_pair_sym = _accel.laplace_pair_sym
    cauchy_pair = _accel.cauchy_pair
    cauchy_pair_sym = _accel.cauchy_pair_sym
    laplace_smoothed_pair = _accel.laplace_smoothed_pair
    preimage_iterate = _accel.preimage_iterate
else:
    gauss_pair = gauss_pair_numpy
    gauss_pair_sym = gauss_pair_sym_numpy
    laplace_pair = laplace_pair_numpy
    laplace_pair_sym = laplace_pair_sym_numpy
    cauchy_pair = cauchy_pair_numpy
    cauchy_pair_sym = cauchy_pair_sym_numpy
    laplace_smoothed_pair = laplace_smoothed_pair_numpy
    preimage_iterate = preimage_iterate_numpy

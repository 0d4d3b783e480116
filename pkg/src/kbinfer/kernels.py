"""Density-normalized positive-definite kernel families.

All kernels in this package are probability densities of their displacement:

* Gaussian: ``k_R(x, y) = N(x - y | 0, R)`` with an SPD covariance ``R``
* Laplace (1-D): ``k(x, y) = (lam0 / 2) exp(-lam0 |x - y|)``
* Cauchy (1-D): ``k(x, y) = sigma0 / (pi ((x - y)^2 + sigma0^2))``

The density normalization makes conditional kernel means of additive-noise
models literal probability densities in their argument, which keeps the
quadrature oracles in the test suite straightforward.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, solve_triangular

from . import _backend
from .errors import ConfigError

__all__ = [
    "KernelSpec",
    "GaussianKernel",
    "LaplaceKernel",
    "CauchyKernel",
    "eval_kernel",
    "gram",
    "as_points",
    "gaussian_norm_const",
    "kernel_from_config",
    "kernel_to_config",
]


def as_points(x, dim=None):
    """Coerce input to a float64 (n, d) point array.

    Scalars become (1, 1); 1-D arrays become a single d-dimensional point
    when ``dim`` matches, otherwise n points on a 1-D domain.
    """
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        if dim is not None and arr.shape[0] == dim and dim > 1:
            arr = arr.reshape(1, dim)
        elif dim in (None, 1):
            arr = arr.reshape(-1, 1)
        else:
            arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ValueError(f"expected points of shape (n, d), got {arr.shape}")
    return np.ascontiguousarray(arr)


def gaussian_norm_const(chol):
    """(2 pi)^(-d/2) |C|^(-1/2) from the lower Cholesky factor of C."""
    d = chol.shape[0]
    return float((2.0 * np.pi) ** (-0.5 * d) / np.prod(np.diag(chol)))


def spd_cholesky(mat, name="covariance"):
    """Validate symmetry and positive definiteness; return the lower factor."""
    mat = np.asarray(mat, dtype=float)
    if mat.ndim == 0:
        mat = mat.reshape(1, 1)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {mat.shape}")
    if not np.allclose(mat, mat.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(mat).max())):
        raise ValueError(f"{name} must be symmetric")
    try:
        c, _ = cho_factor(mat, lower=True)
    except np.linalg.LinAlgError:
        raise ValueError(f"{name} must be positive definite (Cholesky failed)")
    return mat, np.tril(c)


class KernelSpec:
    """Common interface of the kernel families."""

    family = None
    dim = None

    def same_rkhs(self, other):
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class GaussianKernel(KernelSpec):
    """Gaussian density kernel with covariance ``R``."""

    R: np.ndarray

    family = "gaussian"

    def __post_init__(self):
        R, chol = spd_cholesky(self.R, name="R")
        R = R.copy()
        R.setflags(write=False)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "_chol", chol)
        object.__setattr__(self, "_norm", gaussian_norm_const(chol))

    @property
    def dim(self):
        return self.R.shape[0]

    @property
    def norm_const(self):
        return self._norm

    @property
    def chol(self):
        return self._chol

    def whiten(self, points):
        """Map points to coordinates in which the kernel is a unit Gaussian."""
        return solve_triangular(self._chol, points.T, lower=True).T

    def same_rkhs(self, other):
        return (
            isinstance(other, GaussianKernel)
            and self.R.shape == other.R.shape
            and np.array_equal(self.R, other.R)
        )


@dataclass(frozen=True, eq=False)
class LaplaceKernel(KernelSpec):
    """Laplace density kernel with rate ``lam`` on a 1-D domain."""

    lam: float

    family = "laplace"
    dim = 1

    def __post_init__(self):
        if not (np.isfinite(self.lam) and self.lam > 0):
            raise ValueError("Laplace kernel rate must be positive and finite")
        object.__setattr__(self, "lam", float(self.lam))

    def same_rkhs(self, other):
        return isinstance(other, LaplaceKernel) and other.lam == self.lam


@dataclass(frozen=True, eq=False)
class CauchyKernel(KernelSpec):
    """Cauchy density kernel with scale ``sigma`` on a 1-D domain."""

    sigma: float

    family = "cauchy"
    dim = 1

    def __post_init__(self):
        if not (np.isfinite(self.sigma) and self.sigma > 0):
            raise ValueError("Cauchy kernel scale must be positive and finite")
        object.__setattr__(self, "sigma", float(self.sigma))

    def same_rkhs(self, other):
        return isinstance(other, CauchyKernel) and other.sigma == self.sigma


def _check_dims(spec, *point_sets):
    for pts in point_sets:
        if pts.shape[1] != spec.dim:
            raise ValueError(
                f"points of dimension {pts.shape[1]} do not match the "
                f"{spec.family} kernel dimension {spec.dim}"
            )


def eval_kernel(spec, x, y):
    """Evaluate ``k(x, y)`` for a single pair of points."""
    xp = as_points(x, spec.dim)
    yp = as_points(y, spec.dim)
    if xp.shape[0] != 1 or yp.shape[0] != 1:
        raise ValueError("eval_kernel takes single points; use gram for batches")
    _check_dims(spec, xp, yp)
    return float(gram(spec, xp, yp)[0, 0])


def gram(spec, a, b=None):
    """Kernel matrix between two point sets.

    With ``b`` omitted (or identical to ``a``) only the upper triangle is
    computed and mirrored, so the result is exactly symmetric.

    Parameters
    ----------
    spec : KernelSpec
    a, b : array_like
        Point sets of shape (n, d) and (m, d).

    Returns
    -------
    numpy.ndarray of shape (n, m)
    """
    ap = as_points(a, spec.dim)
    symmetric = b is None or b is a
    bp = ap if symmetric else as_points(b, spec.dim)
    if not symmetric and bp.shape == ap.shape and np.array_equal(ap, bp):
        symmetric = True
    _check_dims(spec, ap, bp)

    if spec.family == "gaussian":
        za = spec.whiten(ap)
        if symmetric:
            return _backend.gauss_pair_sym(za, spec.norm_const)
        return _backend.gauss_pair(za, spec.whiten(bp), spec.norm_const)
    if spec.family == "laplace":
        if symmetric:
            return _backend.laplace_pair_sym(ap[:, 0], spec.lam)
        return _backend.laplace_pair(ap[:, 0], bp[:, 0], spec.lam)
    if spec.family == "cauchy":
        if symmetric:
            return _backend.cauchy_pair_sym(ap[:, 0], spec.sigma)
        return _backend.cauchy_pair(ap[:, 0], bp[:, 0], spec.sigma)
    raise ConfigError(f"unknown kernel family {spec.family!r}")


def kernel_from_config(obj):
    """Build a kernel spec from its JSON form.

    ``{"family": "gaussian", "R": [[...]]}``,
    ``{"family": "laplace", "lambda": 2.0}`` or
    ``{"family": "cauchy", "sigma": 1.0}``.
    """
    if not isinstance(obj, dict) or "family" not in obj:
        raise ConfigError("kernel config must be an object with a 'family' key")
    family = obj["family"]
    try:
        if family == "gaussian":
            _expect_keys(obj, {"family", "R"})
            return GaussianKernel(np.asarray(obj["R"], dtype=float))
        if family == "laplace":
            _expect_keys(obj, {"family", "lambda"})
            return LaplaceKernel(float(obj["lambda"]))
        if family == "cauchy":
            _expect_keys(obj, {"family", "sigma"})
            return CauchyKernel(float(obj["sigma"]))
    except ValueError as exc:
        raise ConfigError(f"invalid {family} kernel config: {exc}")
    raise ConfigError(f"unknown kernel family {family!r}")


def _expect_keys(obj, allowed):
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigError(f"unknown kernel config fields: {sorted(unknown)}")
    missing = allowed - set(obj)
    if missing:
        raise ConfigError(f"missing kernel config fields: {sorted(missing)}")


def kernel_to_config(spec):
    if isinstance(spec, GaussianKernel):
        return {"family": "gaussian", "R": spec.R.tolist()}
    if isinstance(spec, LaplaceKernel):
        return {"family": "laplace", "lambda": spec.lam}
    if isinstance(spec, CauchyKernel):
        return {"family": "cauchy", "sigma": spec.sigma}
    raise ConfigError(f"cannot serialize kernel {spec!r}")

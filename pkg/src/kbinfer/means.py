"""Kernel mean estimates and their RKHS geometry.

Two representations coexist:

* ``EmpiricalMean``: a weighted sum of feature functions anchored at data
  points.  Weights may be negative and need not sum to one; no estimator in
  this package renormalizes them.
* ``ModelMean``: a weighted sum of closed-form conditional kernel means
  ("atoms"), produced by the model-based sum rule and by the analytic
  ground-truth constructions.

Inner products are supported between empirical means, between an empirical
mean and any atom type (pointwise atom evaluation suffices), and between
Gaussian atoms, where

    <N(. ; m1, C1), N(. ; m2, C2)>_{H_R} = N(0 ; m1 - m2, C1 + C2 - R).

Pairs of non-Gaussian atoms have no known closed form and raise
``CapabilityError``.
"""

import csv
from dataclasses import dataclass

import numpy as np

from . import _backend
from .errors import CapabilityError
from .kernels import (
    GaussianKernel,
    as_points,
    gaussian_norm_const,
    gram,
    spd_cholesky,
)

__all__ = [
    "EmpiricalMean",
    "ModelMean",
    "GaussianAtom",
    "LaplaceAtom",
    "CauchyAtom",
    "MixtureAtom",
    "eval_mean",
    "expectation",
    "inner_product",
    "rkhs_distance_sq",
    "rkhs_distance",
    "atoms_eval_matrix",
    "write_mean_csv",
    "read_mean_csv",
]


@dataclass(frozen=True, eq=False)
class EmpiricalMean:
    """Weighted feature-function sum ``sum_i w_i k(., X_i)``."""

    spec: object
    anchors: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        anchors = as_points(self.anchors, self.spec.dim)
        weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if anchors.shape[0] != weights.shape[0]:
            raise ValueError(
                f"{anchors.shape[0]} anchors but {weights.shape[0]} weights"
            )
        if anchors.shape[0] < 1:
            raise ValueError("an empirical mean needs at least one anchor")
        if anchors.shape[1] != self.spec.dim:
            raise ValueError("anchor dimension does not match the kernel")
        if not np.all(np.isfinite(weights)):
            raise ValueError("weights must be finite")
        anchors.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "anchors", anchors)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def from_points(cls, spec, points, weights=None):
        """Uniform-weight mean over a sample when ``weights`` is omitted."""
        pts = as_points(points, spec.dim)
        if weights is None:
            weights = np.full(pts.shape[0], 1.0 / pts.shape[0])
        return cls(spec, pts, weights)

    def __len__(self):
        return self.anchors.shape[0]

    @property
    def dim(self):
        return self.anchors.shape[1]


@dataclass(frozen=True, eq=False)
class GaussianAtom:
    """Gaussian density ``N(. ; mean, cov)`` as an RKHS element."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        cov, chol = spd_cholesky(self.cov, name="atom covariance")
        if cov.shape[0] != mean.shape[0]:
            raise ValueError("atom mean and covariance dimensions differ")
        cov = cov.copy()
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "_chol", chol)
        object.__setattr__(self, "_norm", gaussian_norm_const(chol))
        object.__setattr__(self, "_key", ("gauss", cov.tobytes()))

    @property
    def dim(self):
        return self.mean.shape[0]

    def eval(self, points):
        pts = as_points(points, self.dim)
        za = _whiten(self._chol, pts)
        zl = _whiten(self._chol, self.mean.reshape(1, -1))
        return _backend.gauss_pair(za, zl, self._norm)[:, 0]


@dataclass(frozen=True, eq=False)
class LaplaceAtom:
    """Laplace noise of rate ``lam`` smoothed by a Laplace kernel of rate
    ``lam0``, centered at ``loc``.  Not itself a Laplace density."""

    loc: float
    lam: float
    lam0: float

    def __post_init__(self):
        if self.lam <= 0 or self.lam0 <= 0:
            raise ValueError("Laplace rates must be positive")
        object.__setattr__(self, "loc", float(self.loc))

    dim = 1

    @property
    def equal_rates(self):
        return abs(self.lam - self.lam0) <= 1e-9 * max(self.lam, self.lam0)

    def eval(self, points):
        pts = as_points(points, 1)[:, 0]
        return _backend.laplace_smoothed_pair(
            pts, np.array([self.loc]), self.lam, self.lam0, self.equal_rates
        )[:, 0]


@dataclass(frozen=True, eq=False)
class CauchyAtom:
    """Cauchy density with total scale ``scale`` centered at ``loc``."""

    loc: float
    scale: float

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("Cauchy scale must be positive")
        object.__setattr__(self, "loc", float(self.loc))

    dim = 1

    def eval(self, points):
        pts = as_points(points, 1)[:, 0]
        return _backend.cauchy_pair(pts, np.array([self.loc]), self.scale)[:, 0]


@dataclass(frozen=True, eq=False)
class MixtureAtom:
    """Convex combination of atoms in a common RKHS."""

    atoms: tuple
    weights: np.ndarray

    def __post_init__(self):
        atoms = tuple(self.atoms)
        weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if len(atoms) != weights.shape[0]:
            raise ValueError("mixture atom count and weight count differ")
        if len(atoms) == 0:
            raise ValueError("mixture needs at least one component")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)

    @property
    def dim(self):
        return self.atoms[0].dim

    def eval(self, points):
        pts = as_points(points, self.dim)
        out = self.weights[0] * self.atoms[0].eval(pts)
        for w, atom in zip(self.weights[1:], self.atoms[1:]):
            out = out + w * atom.eval(pts)
        return out


@dataclass(frozen=True, eq=False)
class ModelMean:
    """Weighted sum of closed-form conditional-kernel-mean atoms."""

    rkhs: object
    weights: np.ndarray
    atoms: tuple

    def __post_init__(self):
        atoms = tuple(self.atoms)
        weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if len(atoms) != weights.shape[0]:
            raise ValueError(f"{len(atoms)} atoms but {weights.shape[0]} weights")
        if len(atoms) == 0:
            raise ValueError("a model mean needs at least one atom")
        for atom in atoms:
            if atom.dim != self.rkhs.dim:
                raise ValueError("atom dimension does not match the RKHS")
        weights.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)

    def __len__(self):
        return len(self.atoms)

    @property
    def dim(self):
        return self.rkhs.dim


def _whiten(chol, points):
    from scipy.linalg import solve_triangular

    return solve_triangular(chol, points.T, lower=True).T


def _flatten_atom(atom, coef=1.0):
    if isinstance(atom, MixtureAtom):
        leaves = []
        for w, sub in zip(atom.weights, atom.atoms):
            leaves.extend(_flatten_atom(sub, coef * float(w)))
        return leaves
    return [(coef, atom)]


def atoms_eval_matrix(atoms, points):
    """Matrix of atom evaluations, entry (i, j) = atom_j(points_i).

    Gaussian leaves sharing a covariance are evaluated in one batched
    pairwise-density call; other atom types fall back to per-leaf loops.
    """
    atoms = tuple(atoms)
    pts = as_points(points, atoms[0].dim)
    n, l = pts.shape[0], len(atoms)
    out = np.zeros((n, l))
    gauss_groups = {}
    others = []
    for j, atom in enumerate(atoms):
        for coef, leaf in _flatten_atom(atom):
            if isinstance(leaf, GaussianAtom):
                entry = gauss_groups.setdefault(leaf._key, (leaf, []))
                entry[1].append((j, coef, leaf.mean))
            else:
                others.append((j, coef, leaf))
    for proto, items in gauss_groups.values():
        locs = np.array([mean for _, _, mean in items])
        zp = _whiten(proto._chol, pts)
        zl = _whiten(proto._chol, locs)
        block = _backend.gauss_pair(zp, zl, proto._norm)
        for col, (j, coef, _) in enumerate(items):
            out[:, j] += coef * block[:, col]
    for j, coef, leaf in others:
        out[:, j] += coef * leaf.eval(pts)
    return out


def eval_mean(mean, y):
    """Evaluate a kernel mean at one point (returns float) or a batch
    of points (returns a vector)."""
    single = np.asarray(y, dtype=float).ndim <= 1
    pts = as_points(y, mean.dim)
    if isinstance(mean, EmpiricalMean):
        vals = gram(mean.spec, pts, mean.anchors) @ mean.weights
    elif isinstance(mean, ModelMean):
        vals = atoms_eval_matrix(mean.atoms, pts) @ mean.weights
    else:
        raise TypeError(f"not a kernel mean: {type(mean).__name__}")
    return float(vals[0]) if single and vals.shape[0] == 1 else vals


def expectation(mean, f):
    """Estimate ``E[f(X)]`` as ``sum_i w_i f(X_i)`` over the anchors.

    On a 1-D domain ``f`` receives scalars, otherwise (d,) arrays.
    """
    if not isinstance(mean, EmpiricalMean):
        raise TypeError("expectation requires an EmpiricalMean")
    one_d = mean.dim == 1
    total = 0.0
    for w, anchor in zip(mean.weights, mean.anchors):
        arg = float(anchor[0]) if one_d else anchor
        total += w * float(f(arg))
    return total


def _require_same_rkhs(a, b):
    if not a.same_rkhs(b):
        raise ValueError("kernel means live in different RKHSs")


def _gaussian_leaf_groups(mm):
    groups = {}
    for w, atom in zip(mm.weights, mm.atoms):
        for coef, leaf in _flatten_atom(atom, float(w)):
            if not isinstance(leaf, GaussianAtom):
                raise CapabilityError(
                    f"no closed-form inner product for {type(leaf).__name__} pairs"
                )
            entry = groups.setdefault(leaf._key, (leaf, [], []))
            entry[1].append(leaf.mean)
            entry[2].append(coef)
    return [
        (proto, np.array(means), np.array(coefs))
        for proto, means, coefs in groups.values()
    ]


def _gauss_cross_term(r_cov, ca, locs_a, wts_a, cb, locs_b, wts_b):
    cov = ca + cb - r_cov
    _, chol = spd_cholesky(cov, name="inner-product covariance C1 + C2 - R")
    za = _whiten(chol, locs_a)
    zb = _whiten(chol, locs_b)
    block = _backend.gauss_pair(za, zb, gaussian_norm_const(chol))
    return float(wts_a @ block @ wts_b)


def inner_product(a, b):
    """RKHS inner product between two kernel means.

    Empirical x empirical reduces to a Gram bilinear form; empirical x
    model-based reduces to atom evaluations at the anchors; Gaussian-atom
    pairs use the closed form with covariance ``C1 + C2 - R``.
    """
    if isinstance(a, ModelMean) and isinstance(b, EmpiricalMean):
        return inner_product(b, a)
    if isinstance(a, EmpiricalMean) and isinstance(b, EmpiricalMean):
        _require_same_rkhs(a.spec, b.spec)
        return float(a.weights @ gram(a.spec, a.anchors, b.anchors) @ b.weights)
    if isinstance(a, EmpiricalMean) and isinstance(b, ModelMean):
        _require_same_rkhs(a.spec, b.rkhs)
        vals = atoms_eval_matrix(b.atoms, a.anchors) @ b.weights
        return float(a.weights @ vals)
    if isinstance(a, ModelMean) and isinstance(b, ModelMean):
        _require_same_rkhs(a.rkhs, b.rkhs)
        if not isinstance(a.rkhs, GaussianKernel):
            raise CapabilityError(
                "atom-atom inner products are only available in Gaussian RKHSs"
            )
        r_cov = a.rkhs.R
        total = 0.0
        for pa, locs_a, wts_a in _gaussian_leaf_groups(a):
            for pb, locs_b, wts_b in _gaussian_leaf_groups(b):
                total += _gauss_cross_term(
                    r_cov, pa.cov, locs_a, wts_a, pb.cov, locs_b, wts_b
                )
        return total
    raise TypeError("inner_product expects kernel means")


def rkhs_distance_sq(a, b):
    """Squared RKHS distance, clamped at zero against rounding."""
    val = inner_product(a, a) - 2.0 * inner_product(a, b) + inner_product(b, b)
    return max(val, 0.0)


def rkhs_distance(a, b):
    return float(np.sqrt(rkhs_distance_sq(a, b)))


def write_mean_csv(mean, path):
    """Dump an empirical mean as one anchor-plus-weight row per line."""
    if not isinstance(mean, EmpiricalMean):
        raise TypeError("only empirical means are CSV-serializable")
    d = mean.dim
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"x{i}" for i in range(d)] + ["weight"])
        for anchor, w in zip(mean.anchors, mean.weights):
            writer.writerow([repr(float(v)) for v in anchor] + [repr(float(w))])


def read_mean_csv(path, spec):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        d = len(header) - 1
        anchors, weights = [], []
        for row in reader:
            anchors.append([float(v) for v in row[:d]])
            weights.append(float(row[d]))
    return EmpiricalMean(spec, np.array(anchors), np.array(weights))

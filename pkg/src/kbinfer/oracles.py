"""Exact ground truths and experiment machinery.

For a linear-Gaussian conditional model ``y = A x + eps`` applied to a
Gaussian-mixture input ``sum_i xi_i N(mu_i, W_i)``, the output kernel mean
in a Gaussian RKHS with covariance ``R`` is itself a Gaussian mixture of
densities ``N(. ; A mu_i, R + Sigma + A W_i A^T)``; a two-stage chain has
the analogous composed covariance.  This module provides those analytic
means, the matching closed-form squared RKHS errors of the estimators
(quadratic forms in pairwise Gaussian-density matrices built directly from
the model parameters), the synthetic state-space simulator used by the
filtering benchmarks, twofold cross-validation for sequence data, and a
log-log convergence-rate fit.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from . import _backend
from .errors import NumericError
from .kernels import GaussianKernel, as_points, gaussian_norm_const, spd_cholesky
from .means import EmpiricalMean, GaussianAtom, ModelMean
from .noise_models import (
    GaussianMixtureNoise,
    GaussianNoise,
    NoiseModel,
    limacon_fn,
    linear_fn,
)
from .seeding import rng_stream

__all__ = [
    "GaussianMixture",
    "LinearGaussianModel",
    "OutputTruth",
    "ChainTruth",
    "MbKsrVariant",
    "analytic_output_mean",
    "analytic_chain_output_mean",
    "pushforward",
    "error_prop3",
    "error_prop4",
    "SSMConfig",
    "SsmData",
    "simulate_ssm",
    "ssm_transition_model",
    "cross_validate",
    "rate_check",
    "RateResult",
]


@dataclass(frozen=True, eq=False)
class GaussianMixture:
    """Finite Gaussian mixture with simplex weights and SPD covariances."""

    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        means = np.atleast_2d(np.asarray(self.means, dtype=float))
        covs = np.asarray(self.covs, dtype=float)
        if covs.ndim == 2:
            covs = covs[None, :, :]
        if not (w.shape[0] == means.shape[0] == covs.shape[0]):
            raise ValueError("mixture weights, means, covariances disagree")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-10:
            raise ValueError("mixture weights must be a probability vector")
        chols = tuple(
            spd_cholesky(covs[k], name=f"mixture covariance {k}")[1]
            for k in range(covs.shape[0])
        )
        for arr in (w, means, covs):
            arr.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "covs", covs)
        object.__setattr__(self, "_chols", chols)

    @property
    def dim(self):
        return self.means.shape[1]

    @property
    def count(self):
        return self.weights.shape[0]

    def sample(self, rng, size):
        comps = rng.choice(self.count, size=size, p=self.weights)
        z = rng.normal(size=(size, self.dim))
        out = np.empty((size, self.dim))
        for k, chol in enumerate(self._chols):
            mask = comps == k
            out[mask] = self.means[k] + z[mask] @ chol.T
        return out


@dataclass(frozen=True, eq=False)
class LinearGaussianModel:
    """Conditional model ``y = A x + eps`` with ``eps ~ N(0, Sigma)``."""

    A: np.ndarray
    Sigma: np.ndarray

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.A, dtype=float))
        sigma, _ = spd_cholesky(self.Sigma, name="Sigma")
        sigma = sigma.copy()
        a.setflags(write=False)
        sigma.setflags(write=False)
        object.__setattr__(self, "A", a)
        object.__setattr__(self, "Sigma", sigma)

    def to_noise_model(self):
        return NoiseModel(linear_fn(self.A), GaussianNoise(self.Sigma))


def _gauss0(diff, cov):
    """Gaussian density at a single displacement from the origin."""
    _, chol = spd_cholesky(cov)
    z = solve_triangular(chol, np.asarray(diff, dtype=float), lower=True)
    return gaussian_norm_const(chol) * math.exp(-0.5 * float(z @ z))


def _gauss0_cols(points, center, cov):
    """Vector of N(points_i - center ; 0, cov) over rows of ``points``."""
    _, chol = spd_cholesky(cov)
    z = solve_triangular(chol, (points - center[None, :]).T, lower=True)
    sq = np.einsum("ij,ij->j", z, z)
    return gaussian_norm_const(chol) * np.exp(-0.5 * sq)


def _gauss0_pair_sym(points, cov):
    """Symmetric matrix of N(points_i - points_j ; 0, cov)."""
    _, chol = spd_cholesky(cov)
    z = solve_triangular(chol, points.T, lower=True).T
    return _backend.gauss_pair_sym(np.ascontiguousarray(z), gaussian_norm_const(chol))


def analytic_output_mean(model, mixture, rkhs):
    """Exact output kernel mean of the linear-Gaussian pushforward."""
    if not isinstance(rkhs, GaussianKernel):
        raise ValueError("analytic output means are defined in Gaussian RKHSs")
    a, sigma = model.A, model.Sigma
    atoms = tuple(
        GaussianAtom(a @ mu, rkhs.R + sigma + a @ w_cov @ a.T)
        for mu, w_cov in zip(mixture.means, mixture.covs)
    )
    return ModelMean(rkhs, mixture.weights, atoms)


def analytic_chain_output_mean(model1, model2, mixture, rkhs):
    """Exact output kernel mean after two linear-Gaussian stages."""
    if not isinstance(rkhs, GaussianKernel):
        raise ValueError("analytic output means are defined in Gaussian RKHSs")
    a1, s1 = model1.A, model1.Sigma
    a2, s2 = model2.A, model2.Sigma
    atoms = tuple(
        GaussianAtom(
            a2 @ (a1 @ mu),
            rkhs.R + s2 + a2 @ (s1 + a1 @ w_cov @ a1.T) @ a2.T,
        )
        for mu, w_cov in zip(mixture.means, mixture.covs)
    )
    return ModelMean(rkhs, mixture.weights, atoms)


def pushforward(model, mixture):
    """Distribution-level pushforward of a mixture through the model."""
    a, sigma = model.A, model.Sigma
    means = mixture.means @ a.T
    covs = np.array([sigma + a @ w_cov @ a.T for w_cov in mixture.covs])
    return GaussianMixture(mixture.weights, means, covs)


class OutputTruth:
    """Closed-form RKHS errors against the one-stage analytic output mean.

    All matrices are built directly from the model parameters
    ``(A, Sigma)``, the input mixture ``(xi, mu, W)``, and the kernel
    covariance ``R``.
    """

    def __init__(self, model, mixture, kernel):
        if not isinstance(kernel, GaussianKernel):
            raise ValueError("closed-form errors require a Gaussian kernel")
        self.model = model
        self.mixture = mixture
        self.kernel = kernel
        a, sigma, r = model.A, model.Sigma, kernel.R
        xi, mus, ws = mixture.weights, mixture.means, mixture.covs
        el = mixture.count
        e_mat = np.empty((el, el))
        for i in range(el):
            for j in range(i, el):
                cov = r + 2.0 * sigma + a @ (ws[i] + ws[j]) @ a.T
                val = _gauss0(a @ (mus[i] - mus[j]), cov)
                e_mat[i, j] = val
                e_mat[j, i] = val
        self.e_matrix = e_mat
        self.norm_sq = float(xi @ e_mat @ xi)

    def eval(self, points):
        """True output kernel mean evaluated at ``points``."""
        pts = as_points(points, self.kernel.dim)
        a, sigma, r = self.model.A, self.model.Sigma, self.kernel.R
        total = np.zeros(pts.shape[0])
        for xi_j, mu, w_cov in zip(
            self.mixture.weights, self.mixture.means, self.mixture.covs
        ):
            cov = r + sigma + a @ w_cov @ a.T
            total += xi_j * _gauss0_cols(pts, a @ mu, cov)
        return total

    def nonksr_error_sq(self, w, points, gram_mat, mean_vec=None):
        """Squared error of an empirical mean over ``points`` with weights
        ``w``; pass a precomputed ``mean_vec = eval(points)`` to amortize."""
        w = np.asarray(w, dtype=float).reshape(-1)
        if mean_vec is None:
            mean_vec = self.eval(points)
        return float(self.norm_sq - 2.0 * (w @ mean_vec) + w @ gram_mat @ w)

    def mb_error_sq(self, gamma, est_locs, sigma_tilde, f_mat=None, h_mat=None):
        """Squared error of the model-based estimator with atom locations
        ``est_locs`` (the possibly misspecified images of the input
        anchors) and noise covariance ``sigma_tilde``."""
        gamma = np.asarray(gamma, dtype=float).reshape(-1)
        est_locs = as_points(est_locs, self.kernel.dim)
        a, sigma, r = self.model.A, self.model.Sigma, self.kernel.R
        xi, mus, ws = self.mixture.weights, self.mixture.means, self.mixture.covs
        if f_mat is None:
            f_mat = np.empty((est_locs.shape[0], self.mixture.count))
            for j in range(self.mixture.count):
                cov = r + sigma_tilde + sigma + a @ ws[j] @ a.T
                f_mat[:, j] = _gauss0_cols(est_locs, a @ mus[j], cov)
        if h_mat is None:
            h_mat = _gauss0_pair_sym(est_locs, r + 2.0 * sigma_tilde)
        return float(
            self.norm_sq - 2.0 * (gamma @ f_mat @ xi) + gamma @ h_mat @ gamma
        )


class ChainTruth:
    """Closed-form RKHS errors against the two-stage analytic output mean."""

    def __init__(self, model1, model2, mixture, kernel):
        if not isinstance(kernel, GaussianKernel):
            raise ValueError("closed-form errors require a Gaussian kernel")
        self.model1 = model1
        self.model2 = model2
        self.mixture = mixture
        self.kernel = kernel
        a1, s1 = model1.A, model1.Sigma
        a2, s2 = model2.A, model2.Sigma
        r = kernel.R
        xi, mus, ws = mixture.weights, mixture.means, mixture.covs
        el = mixture.count
        a21 = a2 @ a1
        e_mat = np.empty((el, el))
        for i in range(el):
            for j in range(i, el):
                cov = r + 2.0 * s2 + a2 @ (2.0 * s1 + a1 @ (ws[i] + ws[j]) @ a1.T) @ a2.T
                val = _gauss0(a21 @ (mus[i] - mus[j]), cov)
                e_mat[i, j] = val
                e_mat[j, i] = val
        self.e_matrix = e_mat
        self.norm_sq = float(xi @ e_mat @ xi)

    def eval(self, points):
        pts = as_points(points, self.kernel.dim)
        a1, s1 = self.model1.A, self.model1.Sigma
        a2, s2 = self.model2.A, self.model2.Sigma
        r = self.kernel.R
        total = np.zeros(pts.shape[0])
        for xi_j, mu, w_cov in zip(
            self.mixture.weights, self.mixture.means, self.mixture.covs
        ):
            cov = r + s2 + a2 @ (s1 + a1 @ w_cov @ a1.T) @ a2.T
            total += xi_j * _gauss0_cols(pts, a2 @ (a1 @ mu), cov)
        return total

    def nonksr_error_sq(self, w, points, gram_mat, mean_vec=None):
        """Squared error of an empirical mean over output-space points;
        used by both the twice-nonparametric and the model-then-
        nonparametric chains."""
        w = np.asarray(w, dtype=float).reshape(-1)
        if mean_vec is None:
            mean_vec = self.eval(points)
        return float(self.norm_sq - 2.0 * (w @ mean_vec) + w @ gram_mat @ w)

    def n_mb_matrices(self, mid_points):
        """Cross and self matrices of the nonparametric-then-model error
        form; they do not depend on the stage-one weights."""
        a1, s1 = self.model1.A, self.model1.Sigma
        a2, s2 = self.model2.A, self.model2.Sigma
        r = self.kernel.R
        mus, ws = self.mixture.means, self.mixture.covs
        mid = as_points(mid_points, a2.shape[1])
        locs = mid @ a2.T
        a21 = a2 @ a1
        f_mat = np.empty((locs.shape[0], self.mixture.count))
        for j in range(self.mixture.count):
            cov = r + 2.0 * s2 + a2 @ (s1 + a1 @ ws[j] @ a1.T) @ a2.T
            f_mat[:, j] = _gauss0_cols(locs, a21 @ mus[j], cov)
        h_mat = _gauss0_pair_sym(locs, r + 2.0 * s2)
        return f_mat, h_mat

    def n_mb_error_sq(self, w, mid_points, f_mat=None, h_mat=None):
        """Squared error of the nonparametric-then-model chain, whose atoms
        sit at the second-stage images of the mid-layer points."""
        w = np.asarray(w, dtype=float).reshape(-1)
        if f_mat is None or h_mat is None:
            f_mat, h_mat = self.n_mb_matrices(mid_points)
        xi = self.mixture.weights
        return float(self.norm_sq - 2.0 * (w @ f_mat @ xi) + w @ h_mat @ w)


@dataclass(frozen=True, eq=False)
class MbKsrVariant:
    """Model-based estimator variant with (possibly misspecified) params."""

    A_tilde: np.ndarray
    Sigma_tilde: np.ndarray


def error_prop3(estimator, truth, variant):
    """Closed-form squared RKHS error of a one-stage estimator.

    ``variant`` is the string ``"non_ksr"`` for an empirical estimator or
    an ``MbKsrVariant`` for a model-based one.
    """
    if variant == "non_ksr":
        if not isinstance(estimator, EmpiricalMean):
            raise TypeError("the nonparametric variant takes an EmpiricalMean")
        from .kernels import gram

        g = gram(truth.kernel, estimator.anchors)
        return truth.nonksr_error_sq(estimator.weights, estimator.anchors, g)
    if isinstance(variant, MbKsrVariant):
        if not isinstance(estimator, ModelMean):
            raise TypeError("the model-based variant takes a ModelMean")
        locs = np.array([atom.mean for atom in estimator.atoms])
        sigma_tilde = np.atleast_2d(np.asarray(variant.Sigma_tilde, dtype=float))
        return truth.mb_error_sq(estimator.weights, locs, sigma_tilde)
    raise ValueError(f"unknown variant {variant!r}")


def error_prop4(estimator, truth, variant):
    """Closed-form squared RKHS error of a two-stage chain estimator.

    Variants: ``"nn"`` (both stages nonparametric) and ``"mb_n"`` (model
    first, nonparametric second) take empirical estimators over the output
    points; ``"n_mb"`` (nonparametric first, model second) takes the
    model-based estimator together with its mid-layer anchor points.
    """
    if variant in ("nn", "mb_n"):
        if not isinstance(estimator, EmpiricalMean):
            raise TypeError(f"variant {variant} takes an EmpiricalMean")
        from .kernels import gram

        g = gram(truth.kernel, estimator.anchors)
        return truth.nonksr_error_sq(estimator.weights, estimator.anchors, g)
    if variant == "n_mb":
        if not isinstance(estimator, ModelMean):
            raise TypeError("variant n_mb takes a ModelMean")
        a2 = truth.model2.A
        locs = np.array([atom.mean for atom in estimator.atoms])
        mid = np.linalg.solve(a2, locs.T).T if a2.shape[0] == a2.shape[1] else None
        if mid is None:
            raise ValueError("variant n_mb requires a square second-stage matrix")
        return truth.n_mb_error_sq(estimator.weights, mid)
    raise ValueError(f"unknown variant {variant!r}")


# ---------------------------------------------------------------------------
# synthetic state space model
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SSMConfig:
    """Petal-curve dynamics on the plane with square-root observations.

    The angle advances by ``eta`` per step (mod 2 pi) and the state sits on
    the curve with radius ``1 + b sin(M theta)`` plus transition noise
    (isotropic Gaussian of scale ``sigma_h``, or an explicit mixture).
    Observations take coordinate-wise signed square roots plus Laplace
    noise with standard deviation ``sigma_o``.  ``eta_train`` simulates the
    training trajectory under different dynamics than the test phase.
    """

    b: float
    M: int
    eta: float
    sigma_h: float
    sigma_o: float
    T: int
    n_train: int
    seed: int
    noise: object = None
    eta_train: float = None

    def transition_noise(self):
        if self.noise is not None:
            return self.noise
        if not self.sigma_h > 0:
            raise ValueError("sigma_h must be positive without an explicit noise")
        return GaussianNoise(self.sigma_h**2 * np.eye(2))


@dataclass(frozen=True, eq=False)
class SsmData:
    train_thetas: np.ndarray
    train_states: np.ndarray
    train_obs: np.ndarray
    test_thetas: np.ndarray
    test_states: np.ndarray
    test_obs: np.ndarray


_TWO_PI = 2.0 * np.pi


def _advance_angles(theta0, eta, steps):
    thetas = np.empty(steps)
    theta = float(theta0) % _TWO_PI
    for t in range(steps):
        thetas[t] = theta
        theta = theta + eta
        while theta >= _TWO_PI:
            theta -= _TWO_PI
        while theta < 0.0:
            theta += _TWO_PI
    return thetas


def _curve(thetas, b, m_lobes):
    radius = 1.0 + b * np.sin(m_lobes * thetas)
    return np.stack([radius * np.cos(thetas), radius * np.sin(thetas)], axis=1)


def _observe(states, sigma_o, rng):
    base = np.sign(states) * np.sqrt(np.abs(states))
    if sigma_o > 0:
        base = base + rng.laplace(scale=sigma_o / np.sqrt(2.0), size=base.shape)
    return base


def _trajectory(cfg, eta, steps, rng):
    theta0 = rng.uniform(0.0, _TWO_PI)
    thetas = _advance_angles(theta0, eta, steps)
    states = _curve(thetas, cfg.b, cfg.M)
    if cfg.noise is not None:
        states = states + cfg.noise.sample(rng, steps)
    elif cfg.sigma_h > 0:
        states = states + cfg.sigma_h * rng.normal(size=(steps, 2))
    obs = _observe(states, cfg.sigma_o, rng)
    return thetas, states, obs


def simulate_ssm(cfg):
    """Independent training and test trajectories under the configured
    dynamics (training may use ``eta_train``)."""
    eta_train = cfg.eta if cfg.eta_train is None else cfg.eta_train
    tr_rng = rng_stream(cfg.seed, "ssm-train")
    te_rng = rng_stream(cfg.seed, "ssm-test")
    tr = _trajectory(cfg, eta_train, cfg.n_train, tr_rng)
    te = _trajectory(cfg, cfg.eta, cfg.T, te_rng)
    return SsmData(tr[0], tr[1], tr[2], te[0], te[1], te[2])


def ssm_transition_model(cfg, eta=None):
    """Noise model of the test-phase transition dynamics."""
    eta = cfg.eta if eta is None else eta
    return NoiseModel(limacon_fn(cfg.b, cfg.M, eta), cfg.transition_noise())


# ---------------------------------------------------------------------------
# model selection and convergence rate
# ---------------------------------------------------------------------------

_CANONICAL_KEYS = ("epsilon", "delta", "sigma_x", "sigma_z")


def cross_validate(grid, n_items, metric):
    """Twofold grid search over contiguous halves of a sequence.

    ``metric(params, train_slice, val_slice)`` returns the validation loss
    of one fold; cells failing with ``NumericError`` score infinity.  The
    winner minimizes the mean over the two folds; ties go to the smallest
    parameter tuple in canonical key order (epsilon, delta, sigma_x,
    sigma_z, then remaining keys alphabetically).

    Returns ``(best_params, table)`` with one ``(params, score)`` row per
    grid cell.
    """
    if not grid:
        raise ValueError("empty parameter grid")
    keys = [k for k in _CANONICAL_KEYS if k in grid]
    keys += sorted(k for k in grid if k not in _CANONICAL_KEYS)
    values = [sorted(grid[k]) for k in keys]
    half = n_items // 2
    folds = ((slice(0, half), slice(half, n_items)),
             (slice(half, n_items), slice(0, half)))
    best = None
    best_score = np.inf
    table = []
    failures = []
    for combo in itertools.product(*values):
        params = dict(zip(keys, combo))
        scores = []
        for train_sl, val_sl in folds:
            try:
                scores.append(float(metric(params, train_sl, val_sl)))
            except NumericError as exc:
                failures.append(f"{params}: {exc}")
                scores.append(np.inf)
        score = float(np.mean(scores))
        table.append((params, score))
        if score < best_score:
            best = params
            best_score = score
    if best is None or not np.isfinite(best_score):
        raise NumericError(
            "every grid cell failed numerically: " + "; ".join(failures)
        )
    return best, table


@dataclass(frozen=True)
class RateResult:
    slope: float
    sizes: tuple
    mean_errors: tuple


def rate_check(error_fn, sizes, replicates, master_seed, label="rate"):
    """Least-squares slope of log mean error against log sample size.

    ``error_fn(size, rng)`` must return one error value; every (size,
    replicate) cell owns an independent stream, so results do not depend
    on evaluation order.
    """
    sizes = sorted(int(s) for s in sizes)
    if len(sizes) < 4:
        raise ValueError("rate_check needs at least four sizes")
    ratios = [sizes[i + 1] / sizes[i] for i in range(len(sizes) - 1)]
    if max(ratios) > 1.25 * min(ratios):
        raise ValueError("rate_check sizes must be geometrically spaced")
    means = []
    for size in sizes:
        errs = [
            float(error_fn(size, rng_stream(master_seed, label, size, rep)))
            for rep in range(replicates)
        ]
        means.append(float(np.mean(errs)))
    slope = float(np.polyfit(np.log(sizes), np.log(means), 1)[0])
    return RateResult(slope, tuple(sizes), tuple(means))

"""Additive-noise conditional models with closed-form conditional kernel means.

A ``NoiseModel`` couples a mean function ``f`` with an additive noise law,
``y = f(x) + noise``.  For matched kernel families the conditional kernel
mean ``E[k(., Y) | X = x]`` is available in closed form:

* Gaussian noise ``N(0, Sigma)`` in a Gaussian RKHS with covariance ``R``
  gives the Gaussian density ``N(. ; f(x), Sigma + R)``; scale parameters
  add under convolution.
* A Gaussian mixture gives the weight-matched mixture of Gaussian atoms.
* Cauchy noise of scale ``sigma`` in a Cauchy RKHS of scale ``sigma0``
  gives a Cauchy density of scale ``sigma0 + sigma``.
* Laplace noise smoothed by a Laplace kernel has an explicit two-branch
  form (it is not itself a Laplace density).

Every other pairing raises ``CapabilityError``.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .errors import CapabilityError, ConfigError
from .kernels import (
    CauchyKernel,
    GaussianKernel,
    LaplaceKernel,
    as_points,
    gaussian_norm_const,
    spd_cholesky,
)
from .means import CauchyAtom, GaussianAtom, LaplaceAtom, MixtureAtom

__all__ = [
    "MeanFn",
    "register_mean_fn",
    "mean_fn_from_config",
    "identity_fn",
    "linear_fn",
    "limacon_fn",
    "GaussianNoise",
    "GaussianMixtureNoise",
    "LaplaceNoise",
    "CauchyNoise",
    "NoiseModel",
    "conditional_mean",
    "eval_conditional_mean",
    "cross_gram_model",
    "noise_model_from_config",
    "noise_model_to_config",
]


# ---------------------------------------------------------------------------
# mean-function registry
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MeanFn:
    """Named vectorized mean function ``f: (n, d_in) -> (n, d_out)``.

    ``in_dim`` is the expected input dimension when the function fixes one
    (identity leaves it open and takes the noise dimension downstream)."""

    name: str
    params: dict = field(default_factory=dict)
    fn: object = None
    in_dim: int = None

    def __call__(self, points):
        return np.asarray(self.fn(as_points(points, self.in_dim)), dtype=float)


_REGISTRY = {}


def register_mean_fn(name, builder):
    """Register ``builder(params) -> MeanFn`` under ``name``."""
    _REGISTRY[name] = builder


def identity_fn():
    return MeanFn("identity", {}, lambda pts: pts)


def linear_fn(a_matrix):
    a = np.atleast_2d(np.asarray(a_matrix, dtype=float))
    return MeanFn("linear", {"A": a.tolist()}, lambda pts: pts @ a.T, in_dim=a.shape[1])


def limacon_fn(b, M, eta):
    """Rotate-and-project dynamics on the plane.

    The angle of the current point advances by ``eta`` and the image lands
    on the petal curve with radius ``1 + b sin(M theta)``.
    """
    b, eta = float(b), float(eta)
    m_lobes = int(M)

    def fn(pts):
        if pts.shape[1] != 2:
            raise ValueError("limacon dynamics require 2-D points")
        theta = np.arctan2(pts[:, 1], pts[:, 0]) + eta
        radius = 1.0 + b * np.sin(m_lobes * theta)
        return np.stack([radius * np.cos(theta), radius * np.sin(theta)], axis=1)

    return MeanFn("limacon", {"b": b, "M": m_lobes, "eta": eta}, fn, in_dim=2)


register_mean_fn("identity", lambda params: identity_fn())
register_mean_fn("linear", lambda params: linear_fn(params["A"]))
register_mean_fn(
    "limacon",
    lambda params: limacon_fn(params["b"], params["M"], params["eta"]),
)


def mean_fn_from_config(obj):
    if not isinstance(obj, dict) or "name" not in obj:
        raise ConfigError("mean function config must be an object with 'name'")
    name = obj["name"]
    if name not in _REGISTRY:
        raise ConfigError(f"unknown mean function {name!r}")
    params = {k: v for k, v in obj.items() if k != "name"}
    try:
        return _REGISTRY[name](params)
    except KeyError as exc:
        raise ConfigError(f"mean function {name!r} missing parameter {exc}")


# ---------------------------------------------------------------------------
# noise families
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GaussianNoise:
    Sigma: np.ndarray

    kind = "gaussian"

    def __post_init__(self):
        sigma, chol = spd_cholesky(self.Sigma, name="Sigma")
        sigma = sigma.copy()
        sigma.setflags(write=False)
        object.__setattr__(self, "Sigma", sigma)
        object.__setattr__(self, "_chol", chol)

    @property
    def dim(self):
        return self.Sigma.shape[0]

    def sample(self, rng, size):
        z = rng.normal(size=(size, self.dim))
        return z @ self._chol.T


@dataclass(frozen=True, eq=False)
class GaussianMixtureNoise:
    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray

    kind = "gaussian_mixture"

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        means = np.atleast_2d(np.asarray(self.means, dtype=float))
        covs = np.asarray(self.covs, dtype=float)
        if covs.ndim == 2:
            covs = covs[None, :, :]
        if not (w.shape[0] == means.shape[0] == covs.shape[0]):
            raise ValueError("mixture weights, means, and covariances disagree")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-10:
            raise ValueError("mixture weights must be a probability vector")
        chols = []
        for k in range(covs.shape[0]):
            _, chol = spd_cholesky(covs[k], name=f"mixture covariance {k}")
            chols.append(chol)
        for arr in (w, means, covs):
            arr.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "covs", covs)
        object.__setattr__(self, "_chols", tuple(chols))

    @property
    def dim(self):
        return self.means.shape[1]

    def sample(self, rng, size):
        comps = rng.choice(self.weights.shape[0], size=size, p=self.weights)
        z = rng.normal(size=(size, self.dim))
        out = np.empty((size, self.dim))
        for k, chol in enumerate(self._chols):
            mask = comps == k
            out[mask] = self.means[k] + z[mask] @ chol.T
        return out


@dataclass(frozen=True)
class LaplaceNoise:
    lam: float

    kind = "laplace"
    dim = 1

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("Laplace noise rate must be positive")

    def sample(self, rng, size):
        return rng.laplace(scale=1.0 / self.lam, size=(size, 1))


@dataclass(frozen=True)
class CauchyNoise:
    sigma: float

    kind = "cauchy"
    dim = 1

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("Cauchy noise scale must be positive")

    def sample(self, rng, size):
        return self.sigma * rng.standard_cauchy(size=(size, 1))


@dataclass(frozen=True, eq=False)
class NoiseModel:
    """Additive-noise conditional model ``y = f(x) + noise``."""

    mean_fn: MeanFn
    noise: object

    @property
    def output_dim(self):
        return self.noise.dim

    def input_points(self, x):
        """Coerce conditioning points, resolving the input dimension."""
        dim = self.mean_fn.in_dim
        if dim is None and self.mean_fn.name == "identity":
            dim = self.noise.dim
        return as_points(x, dim)

    def sample_outputs(self, xs, rng):
        locs = self.mean_fn(self.input_points(xs))
        return locs + self.noise.sample(rng, locs.shape[0])


def _check_compat(model, rkhs):
    noise = model.noise
    if isinstance(noise, (GaussianNoise, GaussianMixtureNoise)):
        if not isinstance(rkhs, GaussianKernel):
            raise CapabilityError(
                f"{noise.kind} noise requires a Gaussian kernel, got {rkhs.family}"
            )
        if rkhs.dim != noise.dim:
            raise ValueError("noise and kernel dimensions differ")
    elif isinstance(noise, LaplaceNoise):
        if not isinstance(rkhs, LaplaceKernel):
            raise CapabilityError(
                f"laplace noise requires a Laplace kernel, got {rkhs.family}"
            )
    elif isinstance(noise, CauchyNoise):
        if not isinstance(rkhs, CauchyKernel):
            raise CapabilityError(
                f"cauchy noise requires a Cauchy kernel, got {rkhs.family}"
            )
    else:
        raise CapabilityError(f"unsupported noise type {type(noise).__name__}")


def conditional_mean(model, x, rkhs):
    """Closed-form conditional kernel mean at a single conditioning point."""
    _check_compat(model, rkhs)
    loc = model.mean_fn(model.input_points(x))[0]
    noise = model.noise
    if isinstance(noise, GaussianNoise):
        return GaussianAtom(loc, noise.Sigma + rkhs.R)
    if isinstance(noise, GaussianMixtureNoise):
        comps = tuple(
            GaussianAtom(loc + noise.means[k], noise.covs[k] + rkhs.R)
            for k in range(noise.weights.shape[0])
        )
        if len(comps) == 1:
            return comps[0]
        return MixtureAtom(comps, noise.weights)
    if isinstance(noise, LaplaceNoise):
        return LaplaceAtom(float(loc[0]), noise.lam, rkhs.lam)
    return CauchyAtom(float(loc[0]), rkhs.sigma + noise.sigma)


def conditional_atoms(model, xs, rkhs):
    """Conditional kernel means at a batch of conditioning points."""
    _check_compat(model, rkhs)
    locs = model.mean_fn(model.input_points(xs))
    noise = model.noise
    if isinstance(noise, GaussianNoise):
        cov = noise.Sigma + rkhs.R
        return [GaussianAtom(loc, cov) for loc in locs]
    if isinstance(noise, GaussianMixtureNoise):
        covs = [noise.covs[k] + rkhs.R for k in range(noise.weights.shape[0])]
        atoms = []
        for loc in locs:
            comps = tuple(
                GaussianAtom(loc + noise.means[k], covs[k])
                for k in range(len(covs))
            )
            atoms.append(comps[0] if len(comps) == 1 else MixtureAtom(comps, noise.weights))
        return atoms
    if isinstance(noise, LaplaceNoise):
        return [LaplaceAtom(float(loc[0]), noise.lam, rkhs.lam) for loc in locs]
    return [CauchyAtom(float(loc[0]), rkhs.sigma + noise.sigma) for loc in locs]


def eval_conditional_mean(model, x, y, rkhs):
    """Evaluate the conditional kernel mean of ``P(Y | x)`` at ``y``."""
    atom = conditional_mean(model, x, rkhs)
    return float(atom.eval(as_points(y, rkhs.dim))[0])


def cross_gram_model(model, inputs, evals, rkhs):
    """Conditional-mean cross matrix, entry (i, j) = m_{Y | inputs_j}(evals_i).

    This is the model-based analogue of a cross Gram matrix and the
    workhorse of model-based steps inside chains and filters.
    """
    _check_compat(model, rkhs)
    inputs = model.input_points(inputs)
    evals = as_points(evals, rkhs.dim)
    locs = model.mean_fn(inputs)
    if locs.shape[1] != rkhs.dim:
        raise ValueError("mean function output does not match the kernel dimension")
    noise = model.noise

    if isinstance(noise, GaussianNoise):
        _, chol = spd_cholesky(noise.Sigma + rkhs.R)
        return _pair_from_chol(chol, evals, locs)
    if isinstance(noise, GaussianMixtureNoise):
        out = None
        for k in range(noise.weights.shape[0]):
            _, chol = spd_cholesky(noise.covs[k] + rkhs.R)
            block = noise.weights[k] * _pair_from_chol(chol, evals, locs + noise.means[k])
            out = block if out is None else out + block
        return out
    if isinstance(noise, LaplaceNoise):
        equal = abs(noise.lam - rkhs.lam) <= 1e-9 * max(noise.lam, rkhs.lam)
        return _backend.laplace_smoothed_pair(
            evals[:, 0], locs[:, 0], noise.lam, rkhs.lam, equal
        )
    return _backend.cauchy_pair(evals[:, 0], locs[:, 0], rkhs.sigma + noise.sigma)


def _pair_from_chol(chol, evals, locs):
    from scipy.linalg import solve_triangular

    ze = solve_triangular(chol, evals.T, lower=True).T
    zl = solve_triangular(chol, locs.T, lower=True).T
    return _backend.gauss_pair(ze, zl, gaussian_norm_const(chol))


# ---------------------------------------------------------------------------
# config round-trip
# ---------------------------------------------------------------------------

def noise_model_from_config(obj):
    """Parse ``{"f": {...}, "noise": {...}}`` into a NoiseModel."""
    if not isinstance(obj, dict) or set(obj) != {"f", "noise"}:
        raise ConfigError("noise model config needs exactly the keys 'f' and 'noise'")
    mean_fn = mean_fn_from_config(obj["f"])
    noise_cfg = obj["noise"]
    if not isinstance(noise_cfg, dict) or "kind" not in noise_cfg:
        raise ConfigError("noise config must be an object with 'kind'")
    kind = noise_cfg["kind"]
    allowed = {
        "gaussian": {"kind", "Sigma"},
        "gaussian_mixture": {"kind", "weights", "means", "covs"},
        "laplace": {"kind", "lambda"},
        "cauchy": {"kind", "sigma"},
    }
    if kind not in allowed:
        raise ConfigError(f"unknown noise kind {kind!r}")
    unknown = set(noise_cfg) - allowed[kind]
    if unknown:
        raise ConfigError(f"unknown noise config fields: {sorted(unknown)}")
    missing = allowed[kind] - set(noise_cfg)
    if missing:
        raise ConfigError(f"noise config for {kind!r} missing fields: {sorted(missing)}")
    try:
        if kind == "gaussian":
            noise = GaussianNoise(np.asarray(noise_cfg["Sigma"], dtype=float))
        elif kind == "gaussian_mixture":
            noise = GaussianMixtureNoise(
                noise_cfg["weights"], noise_cfg["means"], noise_cfg["covs"]
            )
        elif kind == "laplace":
            noise = LaplaceNoise(float(noise_cfg["lambda"]))
        else:
            noise = CauchyNoise(float(noise_cfg["sigma"]))
    except ValueError as exc:
        raise ConfigError(f"invalid {kind!r} noise config: {exc}")
    return NoiseModel(mean_fn, noise)


def noise_model_to_config(model):
    f_cfg = {"name": model.mean_fn.name, **model.mean_fn.params}
    noise = model.noise
    if isinstance(noise, GaussianNoise):
        n_cfg = {"kind": "gaussian", "Sigma": noise.Sigma.tolist()}
    elif isinstance(noise, GaussianMixtureNoise):
        n_cfg = {
            "kind": "gaussian_mixture",
            "weights": noise.weights.tolist(),
            "means": noise.means.tolist(),
            "covs": noise.covs.tolist(),
        }
    elif isinstance(noise, LaplaceNoise):
        n_cfg = {"kind": "laplace", "lambda": noise.lam}
    elif isinstance(noise, CauchyNoise):
        n_cfg = {"kind": "cauchy", "sigma": noise.sigma}
    else:
        raise ConfigError(f"cannot serialize noise {noise!r}")
    return {"f": f_cfg, "noise": n_cfg}

"""Kernel Bayes filtering for state space models.

One filter owns training pairs ``(X_i, Z_i)`` linking states to
observations.  Each step keeps a weight vector ``alpha_t`` over the
training states, representing the posterior kernel mean given the
observations so far:

1. prediction: ``beta = (G_X + n eps I)^{-1} T alpha`` where ``T`` is the
   transition cross matrix.  For a model-based transition
   ``T_{ij} = m_{X' | X_j}(X_i)`` comes from the closed-form conditional
   kernel means; for a nonparametric transition it is the regularized
   sum-rule solve over transition pairs.
2. update: the Bayes-rule weight computation against the observation Gram
   matrix at the new observation.

Gram matrices and the prediction-side factorization are computed once per
run and reused; time-variant dynamics rebuild only the transition cross
matrix each step.  Point estimates come either from the fixed-point
preimage iteration or from the anchor with the largest weight.
"""

import csv
from dataclasses import dataclass

import numpy as np

from . import _backend
from ._linalg import spd_factor
from .errors import ConfigError, NumericError
from .kernels import GaussianKernel, as_points, gram
from .means import EmpiricalMean, inner_product
from .noise_models import NoiseModel, cross_gram_model
from .rules import RegParams, TrainingPairs, bayes_update_weights

__all__ = [
    "ModelBasedTransition",
    "NonParamTransition",
    "FilterModel",
    "FilterState",
    "init_filter",
    "predict",
    "update",
    "run_filter",
    "FilterRun",
    "preimage",
    "preimage_objective",
    "fkbf_model",
    "write_run_csv",
]


@dataclass(frozen=True, eq=False)
class ModelBasedTransition:
    """Transition given by a noise model; ``time_fn(t)`` may supply a
    per-step mean function for inhomogeneous dynamics."""

    model: NoiseModel
    time_fn: object = None


@dataclass(frozen=True, eq=False)
class NonParamTransition:
    """Transition learned from pairs ``(inputs_i, outputs_i)``.

    The pair outputs must coincide with the filter's training states so
    predicted weights stay aligned with the observation Gram matrix.
    """

    inputs: np.ndarray
    outputs: np.ndarray
    eps: float

    def __post_init__(self):
        inputs = as_points(self.inputs)
        outputs = as_points(self.outputs)
        if inputs.shape[0] != outputs.shape[0]:
            raise ValueError("transition inputs and outputs must pair up")
        if not self.eps > 0:
            raise ValueError("transition eps must be positive")
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "outputs", outputs)


@dataclass(frozen=True, eq=False)
class FilterModel:
    train: TrainingPairs
    transition: object
    reg: RegParams
    prior: object

    def __post_init__(self):
        if isinstance(self.transition, NonParamTransition):
            if not np.array_equal(self.transition.outputs, self.train.xs):
                raise ConfigError(
                    "nonparametric transition outputs must equal the training states"
                )
        elif not isinstance(self.transition, ModelBasedTransition):
            raise ConfigError("transition must be ModelBased or NonParam")
        prior_spec = (
            self.prior.spec if isinstance(self.prior, EmpiricalMean) else self.prior.rkhs
        )
        if not prior_spec.same_rkhs(self.train.kernel_x):
            raise ConfigError("prior mean must live in the state RKHS")


@dataclass(frozen=True, eq=False)
class _Caches:
    solve_x: object          # factor of (G_X + n eps I)
    gram_z: np.ndarray
    trans_static: np.ndarray  # model-based cross matrix, or None when time-variant
    trans_solve: object       # nonparametric: factor of (G_P + p eps_t I)
    trans_cross: np.ndarray   # nonparametric: k(P_i, X_j), shape (p, n)


@dataclass(frozen=True, eq=False)
class FilterState:
    """Posterior weights at time ``t`` plus run-wide cached factorizations."""

    t: int
    alpha: np.ndarray
    cached: _Caches


def _build_caches(model):
    train = model.train
    n = len(train)
    g_x = gram(train.kernel_x, train.xs)
    solve_x = spd_factor(
        g_x + n * model.reg.epsilon * np.eye(n), name="G_X + n eps I"
    )
    g_z = gram(train.kernel_y, train.ys)
    trans_static = None
    trans_solve = None
    trans_cross = None
    tr = model.transition
    if isinstance(tr, ModelBasedTransition):
        if tr.time_fn is None:
            trans_static = cross_gram_model(
                tr.model, train.xs, train.xs, train.kernel_x
            )
    else:
        p = tr.inputs.shape[0]
        g_p = gram(train.kernel_x, tr.inputs)
        trans_solve = spd_factor(
            g_p + p * tr.eps * np.eye(p), name="transition G_P + p eps I"
        )
        trans_cross = gram(train.kernel_x, tr.inputs, train.xs)
    return _Caches(solve_x, g_z, trans_static, trans_solve, trans_cross)


def _obs_kernel_vec(model, z):
    z_pt = as_points(z, model.train.kernel_y.dim)
    return gram(model.train.kernel_y, model.train.ys, z_pt)[:, 0]


def init_filter(model, z1):
    """Bayes-rule step against the prior mean at the first observation."""
    caches = _build_caches(model)
    w0 = _project_prior(model, caches)
    try:
        alpha = bayes_update_weights(
            caches.gram_z, w0, model.reg.delta, _obs_kernel_vec(model, z1)
        )
    except NumericError as exc:
        raise NumericError(f"initial filtering failed: {exc}", time_index=1)
    return FilterState(1, alpha, caches)


def _project_prior(model, caches):
    train = model.train
    prior = model.prior
    if isinstance(prior, EmpiricalMean):
        mat = gram(train.kernel_x, train.xs, prior.anchors)
    else:
        from .means import atoms_eval_matrix

        mat = atoms_eval_matrix(prior.atoms, train.xs)
    return caches.solve_x.solve(mat @ prior.weights)


def predict(state, model):
    """Push the posterior weights through the transition."""
    tr = model.transition
    caches = state.cached
    if isinstance(tr, ModelBasedTransition):
        if tr.time_fn is None:
            mat = caches.trans_static
        else:
            step_model = NoiseModel(tr.time_fn(state.t + 1), tr.model.noise)
            mat = cross_gram_model(
                step_model, model.train.xs, model.train.xs, model.train.kernel_x
            )
        return caches.solve_x.solve(mat @ state.alpha)
    w = caches.trans_solve.solve(caches.trans_cross @ state.alpha)
    return w


def update(state, model, beta, z_t):
    """Bayes-rule weight computation at the next observation."""
    beta = np.asarray(beta, dtype=float).reshape(-1)
    if beta.shape[0] != len(model.train):
        raise ValueError("beta length must match the training size")
    t_next = state.t + 1
    try:
        alpha = bayes_update_weights(
            state.cached.gram_z, beta, model.reg.delta, _obs_kernel_vec(model, z_t)
        )
    except NumericError as exc:
        raise NumericError(f"filter update failed: {exc}", time_index=t_next)
    return FilterState(t_next, alpha, state.cached)


@dataclass(frozen=True, eq=False)
class FilterRun:
    states: list
    estimates: np.ndarray


def run_filter(model, observations, point_estimate="preimage"):
    """Run the full filter over an observation sequence.

    ``point_estimate`` selects "preimage" (fixed-point iteration, Gaussian
    state kernels only) or "argmax" (training state with the largest
    weight).  Numeric failures abort with the failing time index attached.
    """
    obs = as_points(observations, model.train.kernel_y.dim)
    if obs.shape[0] < 1:
        raise ValueError("need at least one observation")
    if point_estimate not in ("preimage", "argmax"):
        raise ConfigError(f"unknown point estimator {point_estimate!r}")
    states = [init_filter(model, obs[0])]
    for t in range(1, obs.shape[0]):
        beta = predict(states[-1], model)
        states.append(update(states[-1], model, beta, obs[t]))
    estimates = np.empty((obs.shape[0], model.train.kernel_x.dim))
    for i, state in enumerate(states):
        estimates[i] = _point_estimate(model, state.alpha, point_estimate)
    return FilterRun(states, estimates)


def _point_estimate(model, alpha, kind):
    anchors = model.train.xs
    if kind == "argmax" or not np.any(alpha > 0):
        return anchors[int(np.argmax(alpha))]
    mean = EmpiricalMean(model.train.kernel_x, anchors, alpha)
    return preimage(mean)


def preimage(mean, tol=1e-8, max_iter=200):
    """Point whose feature function best matches an empirical mean.

    Guarded fixed-point iteration ``x <- sum_i c_i X_i / sum_i c_i`` with
    ``c_i = w_i k(x, X_i)``, started at the anchor with the largest weight.
    Iteration stops once the step is below ``tol``, the iteration budget is
    exhausted, or a step would increase the objective; if the weight
    density underflows at the start, the starting anchor is returned.
    """
    if not isinstance(mean, EmpiricalMean):
        raise TypeError("preimage expects an EmpiricalMean")
    if not isinstance(mean.spec, GaussianKernel):
        raise ConfigError("the preimage iteration requires a Gaussian kernel")
    w = mean.weights
    if not np.any(w > 0):
        raise ValueError("preimage needs at least one positive weight")
    x0 = mean.anchors[int(np.argmax(w))]
    x, _, _, ok = _backend.preimage_iterate(
        np.ascontiguousarray(mean.anchors),
        np.ascontiguousarray(w),
        np.ascontiguousarray(mean.spec.chol),
        np.ascontiguousarray(x0, dtype=float),
        float(tol),
        int(max_iter),
    )
    return x if ok else np.array(x0, dtype=float)


def preimage_objective(mean, x):
    """Squared RKHS distance between ``k(., x)`` and the mean."""
    feat = EmpiricalMean(mean.spec, as_points(x, mean.dim), np.array([1.0]))
    return (
        inner_product(feat, feat)
        - 2.0 * inner_product(feat, mean)
        + inner_product(mean, mean)
    )


def fkbf_model(states, observations, kernel_x, kernel_z, reg, prior=None):
    """Fully nonparametric filter from one training trajectory.

    Anchors are the states from time 2 on (paired with their observations),
    and the transition is learned from the consecutive-state pairs, so the
    predicted weights line up with the anchors.
    """
    states = as_points(states, kernel_x.dim)
    observations = as_points(observations, kernel_z.dim)
    if states.shape[0] != observations.shape[0]:
        raise ValueError("states and observations must pair up")
    if states.shape[0] < 3:
        raise ValueError("need at least three states to learn a transition")
    train = TrainingPairs(states[1:], observations[1:], kernel_x, kernel_z)
    transition = NonParamTransition(states[:-1], states[1:], reg.epsilon)
    if prior is None:
        prior = EmpiricalMean.from_points(kernel_x, states[1:])
    return FilterModel(train, transition, reg, prior)


def write_weight_snapshots(path, model, run):
    """Per-step posterior weight dump: one (t, anchor, weight) row per
    anchor per step, for posterior visualizations."""
    anchors = model.train.xs
    d = anchors.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t"] + [f"x{i}" for i in range(d)] + ["weight"])
        for state in run.states:
            for anchor, w in zip(anchors, state.alpha):
                writer.writerow(
                    [state.t]
                    + [repr(float(v)) for v in anchor]
                    + [repr(float(w))]
                )


def write_run_csv(path, truths, estimates):
    """Trajectory CSV: time, true state, estimate, squared error."""
    truths = as_points(truths)
    estimates = as_points(estimates)
    d = truths.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        header = (
            ["t"]
            + [f"true_{i}" for i in range(d)]
            + [f"est_{i}" for i in range(d)]
            + ["sq_error"]
        )
        writer.writerow(header)
        for t, (xt, et) in enumerate(zip(truths, estimates), start=1):
            err = float(np.sum((xt - et) ** 2))
            writer.writerow(
                [t]
                + [repr(float(v)) for v in xt]
                + [repr(float(v)) for v in et]
                + [repr(err)]
            )

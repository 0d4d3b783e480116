"""The kernel-mean inference rules and their chain composition.

Weight conventions, for training pairs ``(X_i, Y_i), i = 1..n`` and an
input mean ``sum_j gamma_j k(., Xt_j)``:

* nonparametric sum rule: ``w = (G_X + n eps I)^{-1} G_{X,Xt} gamma``
  mapping onto output features ``k(., Y_i)``
* model-based sum rule: the input weights pass through unchanged onto
  closed-form conditional-mean atoms (no regularization parameter exists)
* Bayes rule: given prior weights ``w`` over the training inputs and an
  observation ``y``, the posterior weights over the inputs are
  ``D(w) G_Y ((D(w) G_Y)^2 + delta I)^{-1} D(w) k_Y(y)``

All regularized Gram systems are solved via Cholesky with jitter
escalation.  The Bayes-rule squared system is not symmetric (weights may
be negative), so it is solved by LU factorization instead.
"""

from dataclasses import dataclass

import numpy as np

from ._linalg import spd_factor
from .errors import ConfigError, NumericError
from .kernels import as_points, gram
from .means import EmpiricalMean, ModelMean, atoms_eval_matrix
from .noise_models import NoiseModel, conditional_atoms

__all__ = [
    "TrainingPairs",
    "RegParams",
    "non_ksr",
    "mb_ksr",
    "kbr",
    "kbr_model_prior",
    "project_prior_weights",
    "bayes_update_weights",
    "NonParam",
    "ModelBased",
    "chain",
]


@dataclass(frozen=True, eq=False)
class TrainingPairs:
    """Paired sample from a conditional distribution, with its two kernels."""

    xs: np.ndarray
    ys: np.ndarray
    kernel_x: object
    kernel_y: object

    def __post_init__(self):
        xs = as_points(self.xs, self.kernel_x.dim)
        ys = as_points(self.ys, self.kernel_y.dim)
        if xs.shape[0] != ys.shape[0]:
            raise ValueError("xs and ys must pair up one to one")
        if xs.shape[0] < 1:
            raise ValueError("training pairs must be nonempty")
        if xs.shape[1] != self.kernel_x.dim or ys.shape[1] != self.kernel_y.dim:
            raise ValueError("training point dimensions do not match the kernels")
        xs.setflags(write=False)
        ys.setflags(write=False)
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)

    def __len__(self):
        return self.xs.shape[0]


@dataclass(frozen=True)
class RegParams:
    """Regularizers: ``epsilon`` for sum-rule solves, ``delta`` for the
    Bayes-rule squared system."""

    epsilon: float
    delta: float

    def __post_init__(self):
        if not (self.epsilon > 0 and np.isfinite(self.epsilon)):
            raise ValueError("epsilon must be positive")
        if not (self.delta > 0 and np.isfinite(self.delta)):
            raise ValueError("delta must be positive")


def _check_input_spec(input_mean, kernel_x, what):
    spec = input_mean.spec if isinstance(input_mean, EmpiricalMean) else input_mean.rkhs
    if not spec.same_rkhs(kernel_x):
        raise ConfigError(f"{what}: input mean lives in a different RKHS "
                          f"than the training inputs")


def non_ksr(train, input_mean, eps):
    """Nonparametric sum rule.

    Returns the empirical output mean over ``train.ys`` with weights
    solving ``(G_X + n eps I) w = G_{X,Xt} gamma``.  Output weights are
    not normalized; empirically they sum to roughly one when the input
    weights do and the regularizer is small relative to the Gram scale.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    _check_input_spec(input_mean, train.kernel_x, "non_ksr")
    n = len(train)
    g_x = gram(train.kernel_x, train.xs)
    if isinstance(input_mean, EmpiricalMean):
        cross = gram(train.kernel_x, train.xs, input_mean.anchors)
    else:
        cross = atoms_eval_matrix(input_mean.atoms, train.xs)
    rhs = cross @ input_mean.weights
    factor = spd_factor(g_x + n * eps * np.eye(n), name="G_X + n eps I")
    return EmpiricalMean(train.kernel_y, train.ys, factor.solve(rhs))


def mb_ksr(model, input_mean, rkhs_y):
    """Model-based sum rule: input weights over conditional-mean atoms."""
    if not isinstance(input_mean, EmpiricalMean):
        raise ConfigError("mb_ksr consumes an empirical input mean")
    atoms = conditional_atoms(model, input_mean.anchors, rkhs_y)
    return ModelMean(rkhs_y, input_mean.weights, tuple(atoms))


def bayes_update_weights(gram_obs, prior_w, delta, k_vec):
    """Posterior weights from prior weights and an observed kernel vector."""
    prior_w = np.asarray(prior_w, dtype=float).reshape(-1)
    n = prior_w.shape[0]
    if gram_obs.shape != (n, n) or k_vec.shape[0] != n:
        raise ValueError("weight, Gram, and kernel-vector sizes disagree")
    if not delta > 0:
        raise ValueError("delta must be positive")
    dg = prior_w[:, None] * gram_obs
    system = dg @ dg
    system.flat[:: n + 1] += delta
    try:
        sol = np.linalg.solve(system, prior_w * k_vec)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"Bayes-rule squared system is singular: {exc}")
    alpha = dg @ sol
    if not np.all(np.isfinite(alpha)):
        raise NumericError("Bayes-rule update produced non-finite weights")
    return alpha


def kbr(train, prior_weights, delta, y_obs):
    """Bayes rule with prior weights given over the training inputs.

    Returns the posterior mean over ``train.xs`` at observation ``y_obs``.
    """
    prior_weights = np.asarray(prior_weights, dtype=float).reshape(-1)
    if prior_weights.shape[0] != len(train):
        raise ValueError("prior weight vector must match the training size")
    g_y = gram(train.kernel_y, train.ys)
    y_pt = as_points(y_obs, train.kernel_y.dim)
    k_vec = gram(train.kernel_y, train.ys, y_pt)[:, 0]
    alpha = bayes_update_weights(g_y, prior_weights, delta, k_vec)
    return EmpiricalMean(train.kernel_x, train.xs, alpha)


def project_prior_weights(train, prior, eps):
    """Re-express a prior mean as weights over the training inputs.

    Empirical priors use the cross Gram matrix against the prior anchors,
    model-based priors evaluate their atoms at the training inputs; both
    then solve against ``G_X + n eps I``.
    """
    _check_input_spec(prior, train.kernel_x, "prior projection")
    n = len(train)
    g_x = gram(train.kernel_x, train.xs)
    if isinstance(prior, EmpiricalMean):
        mat = gram(train.kernel_x, train.xs, prior.anchors)
    else:
        mat = atoms_eval_matrix(prior.atoms, train.xs)
    factor = spd_factor(g_x + n * eps * np.eye(n), name="G_X + n eps I")
    return factor.solve(mat @ prior.weights)


def kbr_model_prior(train, prior, reg, y_obs):
    """Bayes rule whose prior arrives as a model-based mean.

    The prior atoms are evaluated at the training inputs to form the prior
    weight vector, which then feeds the ordinary Bayes-rule update.
    """
    if not isinstance(prior, ModelMean):
        raise ConfigError("kbr_model_prior expects a model-based prior mean")
    w = project_prior_weights(train, prior, reg.epsilon)
    return kbr(train, w, reg.delta, y_obs)


@dataclass(frozen=True, eq=False)
class NonParam:
    """Chain step learned from training pairs with regularizer ``eps``."""

    train: TrainingPairs
    eps: float


@dataclass(frozen=True, eq=False)
class ModelBased:
    """Chain step given by a noise model mapping into ``rkhs`` ."""

    model: NoiseModel
    rkhs: object


def _step_io(step):
    if isinstance(step, NonParam):
        return step.train.kernel_x, step.train.kernel_y
    return None, step.rkhs


def _validate_chain(steps, input_mean):
    if not steps:
        raise ConfigError("chain needs at least one step")
    prev_model_based = isinstance(input_mean, ModelMean)
    cur_spec = input_mean.spec if isinstance(input_mean, EmpiricalMean) else input_mean.rkhs
    for idx, step in enumerate(steps):
        if isinstance(step, NonParam):
            if not step.eps > 0:
                raise ConfigError(f"chain step {idx}: eps must be positive")
            if not cur_spec.same_rkhs(step.train.kernel_x):
                raise ConfigError(
                    f"chain step {idx}: input RKHS does not match the "
                    f"step's training-input RKHS"
                )
            cur_spec = step.train.kernel_y
            prev_model_based = False
        elif isinstance(step, ModelBased):
            if prev_model_based:
                raise ConfigError(
                    f"chain step {idx}: a model-based step cannot follow "
                    f"another model-based step; no closed form is available"
                )
            cur_spec = step.rkhs
            prev_model_based = True
        else:
            raise ConfigError(f"chain step {idx}: unknown step type {type(step).__name__}")


def chain(steps, input_mean):
    """Fold an input mean through sum-rule steps.

    A nonparametric step after a model-based one consumes the atom
    evaluations at its training inputs in place of a cross Gram matrix.
    Wiring is validated before any numerical work starts.
    """
    steps = list(steps)
    _validate_chain(steps, input_mean)
    current = input_mean
    for step in steps:
        if isinstance(step, NonParam):
            current = non_ksr(step.train, current, step.eps)
        else:
            current = mb_ksr(step.model, current, step.rkhs)
    return current

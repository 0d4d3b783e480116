"""Kernel Bayesian inference in kernel-mean form.

Nonparametric and model-based sum rules, the kernel Bayes rule, their
chain compositions, and a Bayes filter for state space models whose
transition dynamics come from an additive-noise probabilistic model, plus
exact desk-scale ground truths for validating every estimator.
"""

__version__ = "0.1.0"

from ._backend import active_backend
from .errors import CapabilityError, ConfigError, KbError, NumericError
from .kernels import (
    CauchyKernel,
    GaussianKernel,
    KernelSpec,
    LaplaceKernel,
    eval_kernel,
    gram,
    kernel_from_config,
    kernel_to_config,
)
from .means import (
    CauchyAtom,
    EmpiricalMean,
    GaussianAtom,
    LaplaceAtom,
    MixtureAtom,
    ModelMean,
    eval_mean,
    expectation,
    inner_product,
    rkhs_distance,
    rkhs_distance_sq,
)
from .noise_models import (
    CauchyNoise,
    GaussianMixtureNoise,
    GaussianNoise,
    LaplaceNoise,
    MeanFn,
    NoiseModel,
    conditional_mean,
    cross_gram_model,
    eval_conditional_mean,
    identity_fn,
    limacon_fn,
    linear_fn,
    noise_model_from_config,
    noise_model_to_config,
    register_mean_fn,
)
from .rules import (
    ModelBased,
    NonParam,
    RegParams,
    TrainingPairs,
    chain,
    kbr,
    kbr_model_prior,
    mb_ksr,
    non_ksr,
)
from .filtering import (
    FilterModel,
    FilterState,
    ModelBasedTransition,
    NonParamTransition,
    fkbf_model,
    init_filter,
    predict,
    preimage,
    preimage_objective,
    run_filter,
    update,
)
from .oracles import (
    ChainTruth,
    GaussianMixture,
    LinearGaussianModel,
    MbKsrVariant,
    OutputTruth,
    SSMConfig,
    analytic_chain_output_mean,
    analytic_output_mean,
    cross_validate,
    error_prop3,
    error_prop4,
    pushforward,
    rate_check,
    simulate_ssm,
    ssm_transition_model,
)
from .seeding import derive_seed, rng_stream

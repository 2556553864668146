"""Extreme quantile estimation for functions of dependent variables.

The pipeline: rank-transform data to pseudo-observations, fit a D-vine
copula over the natural variable order, draw a large bootstrap sample by
inverse Rosenblatt transformation, and read the tail quantile off the
bootstrap values.  Includes goodness-of-fit tests and a simulation harness.
"""

from .bicop import (
    DEFAULT_CANDIDATES,
    FAMILIES,
    INDEPENDENCE,
    PairCopula,
    PairFit,
    cdf,
    density,
    fit_pair,
    h_function,
    h_given_u,
    inv_h,
    inv_h_given_u,
    kendall_tau,
    log_density as pair_log_density,
    sample_pair,
    select_family,
)
from .dvine import (
    POLICIES,
    CopulaPolicy,
    DVineFit,
    DVineModel,
    conditional_pseudo,
    fit_sequential,
    fit_with_policy,
    independence_vine,
    load_model,
    log_density,
    markov_vine,
    model_from_dict,
    model_to_dict,
    policy_from_name,
    save_model,
    select_truncation,
)
from .errors import (
    DegenerateDataError,
    InvalidInputError,
    NumericError,
    VinequantError,
)
from .gof import (
    GofResult,
    empirical_copula,
    gof_statistics,
    model_copula_cdf,
    parametric_bootstrap_pvalue,
)
from .marginals import PseudoSample, inverse_empirical, pseudo_observations
from .quantile import (
    BUILTIN_TARGETS,
    H1,
    H2,
    H3,
    H4,
    QuantileEstimate,
    TargetFunction,
    custom_target,
    estimate_extreme_quantile,
    evaluate,
    mare,
    sample_quantile,
    target_by_name,
)
from .rng import RngStream
from .sampler import sample_data, sample_independent, sample_uniform_vine
from .sim import (
    AlphaHatConfig,
    ExperimentConfig,
    ExperimentResult,
    MarginalTransform,
    gen_ar2,
    run_experiment,
    run_truncated_alpha,
    true_quantile_mc,
    truncated_alpha,
)

__version__ = "0.1.0"

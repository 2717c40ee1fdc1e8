"""Sequential Monte Carlo transformations with exact oracles for their limits.

The library provides the two elementary particle transformations
(mutation through a proposal kernel, unbiased resampling), an adaptive
particle filter for state-space smoothing built from them, and the exact
machinery needed to certify their large-population behavior: enumeration
oracles for conditional moments, the asymptotic-variance recursion of the
adaptive filter, and a seeded replication harness for law-of-large-numbers
and central-limit checks.
"""

from ._version import __version__
from .kernels import (
    DiscreteDistribution,
    MultiProposal,
    MutationKernelPair,
    is_reweighting_as_mutation,
    reweighting_pair,
)
from .mutation import mutate, mutate_multi
from .resampling import (
    MULTINOMIAL,
    RESIDUAL,
    ResamplingPolicy,
    conditional_mean,
    conditional_variance,
    multinomial_resample,
    residual_counts,
    residual_deterministic_limit,
    residual_limit_weight,
    residual_regularity_check,
    residual_resample,
)
from .state_space import (
    OPTIMAL,
    PRIOR,
    RESAMPLE_MOVE,
    DiscreteHMM,
    LinearGaussianSSM,
    SmcTrace,
    exact_joint_smoothing,
    forward_backward_marginals,
    optimal_proposal,
    prior_proposal,
    random_likelihood_table,
    resample_move_proposal,
    smc_init,
    smc_run,
    smc_step,
)
from .variance_oracle import (
    VarianceRecursionState,
    ess_limit,
    mutated_cv2_limit,
    recursion_init,
    recursion_step,
    run_recursion,
    variance_table,
)
from .harness import (
    ExperimentConfig,
    ExperimentReport,
    TerminalFunction,
    clt_check,
    counterexample_run,
    ks_test,
    lln_check,
    normal_cdf,
    run_replicates,
    summarize_counterexample,
)
from .weighted_sample import WeightedSample, equally_weighted

__all__ = [
    "__version__",
    "DiscreteDistribution",
    "MultiProposal",
    "MutationKernelPair",
    "is_reweighting_as_mutation",
    "reweighting_pair",
    "mutate",
    "mutate_multi",
    "MULTINOMIAL",
    "RESIDUAL",
    "ResamplingPolicy",
    "conditional_mean",
    "conditional_variance",
    "multinomial_resample",
    "residual_counts",
    "residual_deterministic_limit",
    "residual_limit_weight",
    "residual_regularity_check",
    "residual_resample",
    "OPTIMAL",
    "PRIOR",
    "RESAMPLE_MOVE",
    "DiscreteHMM",
    "LinearGaussianSSM",
    "SmcTrace",
    "exact_joint_smoothing",
    "forward_backward_marginals",
    "optimal_proposal",
    "prior_proposal",
    "random_likelihood_table",
    "resample_move_proposal",
    "smc_init",
    "smc_run",
    "smc_step",
    "VarianceRecursionState",
    "ess_limit",
    "mutated_cv2_limit",
    "recursion_init",
    "recursion_step",
    "run_recursion",
    "variance_table",
    "ExperimentConfig",
    "ExperimentReport",
    "TerminalFunction",
    "clt_check",
    "counterexample_run",
    "ks_test",
    "lln_check",
    "normal_cdf",
    "run_replicates",
    "summarize_counterexample",
    "WeightedSample",
    "equally_weighted",
]

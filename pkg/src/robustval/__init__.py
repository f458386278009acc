"""Semivalue data valuation with robustness guarantees.

The package splits into five layers:

* combinatorial core — :mod:`robustval.subsets`, :mod:`robustval.weights`,
  :mod:`robustval.exact`;
* robustness theory — :mod:`robustval.robustness` (safety margins, Lipschitz
  constants, adversarial perturbations, noise models);
* Monte Carlo estimators — :mod:`robustval.estimators`;
* utility oracles — :mod:`robustval.oracles`, :mod:`robustval.datasets`,
  :mod:`robustval.training`, :mod:`robustval.cache`;
* evaluation — :mod:`robustval.evalkit`, :mod:`robustval.experiments`,
  :mod:`robustval.cli`.
"""

from .cache import EvalCache, cache_get_or_eval, cache_key
from .datasets import TabularDataset, flip_labels, load_csv, synthetic_gaussian_dataset
from .errors import (
    CohortTooLarge,
    InvalidParam,
    InvalidTau,
    LengthMismatch,
    MemberAlreadyPresent,
    NormalizationViolation,
    NumericalDivergence,
    OracleFailure,
    RobustvalError,
    SamePoint,
    SchemeMismatch,
    StorageFailure,
    TauTooLarge,
)
from .estimators import (
    ApproximationTarget,
    SampleLedger,
    ValueEstimate,
    convergence_trace,
    draw_ledger,
    msr_estimate,
    permutation_shapley_estimate,
    plan_sample_size,
    simple_mc_estimate,
)
from .evalkit import (
    DetectionReport,
    mislabel_detect,
    nearest_rank_percentile,
    spearman,
    topk_consistency,
    weighted_sample_training,
)
from .exact import (
    DistinguishabilityProfile,
    ValueVector,
    distinguishability_profile,
    exact_semivalue,
    marginal_contribution,
    pairwise_difference,
    value_ranking,
)
from .oracles import (
    AdditiveOracle,
    CountingOracle,
    FunctionOracle,
    TableOracle,
    UtilityOracle,
    materialize_table,
)
from .robustness import (
    GaussianNoisyOracle,
    LipschitzReport,
    NoiseModel,
    PerturbedOracle,
    RepeatAverageOracle,
    SafetyMarginReport,
    adversarial_perturbation,
    apply_noise,
    lipschitz_constant,
    safety_margin,
    semivalue_matrix,
    worst_case_utility,
)
from .seeding import derive_eval_seed, stable_hash
from .subsets import SubsetKey, all_subsets
from .training import TrainerConfig, TrainerOracle, make_oracle, train
from .weights import SemivalueSpec, make_weights

__version__ = "0.1.0"

__all__ = [
    "AdditiveOracle",
    "ApproximationTarget",
    "CohortTooLarge",
    "CountingOracle",
    "DetectionReport",
    "DistinguishabilityProfile",
    "EvalCache",
    "FunctionOracle",
    "GaussianNoisyOracle",
    "InvalidParam",
    "InvalidTau",
    "LengthMismatch",
    "LipschitzReport",
    "MemberAlreadyPresent",
    "NoiseModel",
    "NormalizationViolation",
    "NumericalDivergence",
    "OracleFailure",
    "PerturbedOracle",
    "RepeatAverageOracle",
    "RobustvalError",
    "SafetyMarginReport",
    "SamePoint",
    "SampleLedger",
    "SchemeMismatch",
    "SemivalueSpec",
    "StorageFailure",
    "SubsetKey",
    "TabularDataset",
    "TableOracle",
    "TauTooLarge",
    "TrainerConfig",
    "TrainerOracle",
    "UtilityOracle",
    "ValueEstimate",
    "ValueVector",
    "adversarial_perturbation",
    "all_subsets",
    "apply_noise",
    "cache_get_or_eval",
    "cache_key",
    "convergence_trace",
    "derive_eval_seed",
    "distinguishability_profile",
    "draw_ledger",
    "exact_semivalue",
    "flip_labels",
    "lipschitz_constant",
    "load_csv",
    "make_oracle",
    "make_weights",
    "marginal_contribution",
    "materialize_table",
    "mislabel_detect",
    "msr_estimate",
    "nearest_rank_percentile",
    "pairwise_difference",
    "permutation_shapley_estimate",
    "plan_sample_size",
    "safety_margin",
    "semivalue_matrix",
    "simple_mc_estimate",
    "spearman",
    "stable_hash",
    "synthetic_gaussian_dataset",
    "topk_consistency",
    "train",
    "value_ranking",
    "weighted_sample_training",
    "worst_case_utility",
]

"""Distribution-free predictive inference.

Rank-based p-values and prediction sets with finite-sample coverage
guarantees: split conformal intervals for regression, label sets for
classification, weighted variants for covariate shift, PAC tolerance
calibration, and batch outlier screening. ``simlab`` bundles the Monte
Carlo harness used to measure coverage and set size against oracle and
plug-in baselines.
"""
from .core import (
    CalibrationSet,
    Category,
    DomainError,
    InputError,
    LabeledSample,
    NumericalError,
    Real,
    ScoreBag,
    ScoreEvaluationError,
    empirical_quantile,
    exact_level,
    order_statistic,
)
from .engine import (
    FiniteSet,
    Interval,
    LabelSet,
    PValueResult,
    RandomizedSet,
    ScoreFunction,
    add_tiebreak_noise,
    conformal_p,
    prediction_set_by_inversion,
)
from .split import (
    Classifier,
    RegressionModels,
    classification_threshold_set,
    cqr_interval,
    cumulative_probability_set,
    mean_residual_interval,
    mondrian_p,
    one_sided_upper_bound,
)
from .categorical import (
    LabelCounts,
    PopulationPMF,
    categorical_p_closed_form,
    multinomial_score,
    multinomial_score_function,
    oracle_set,
    unseen_label_rule,
)
from .weighted import (
    DensityRatio,
    JointLaw,
    WeightVector,
    covariate_shift_weights,
    permutation_weights_bruteforce,
    weighted_p,
    weighted_prediction_set,
)
from .pac import (
    PacTarget,
    RSelection,
    ToleranceThreshold,
    coverage_fluctuation_sd,
    regularized_incomplete_beta,
    select_r_marginal,
    select_r_pac,
    tolerance_threshold,
)
from .outliers import (
    BhResult,
    OutlierBatch,
    bh_procedure,
    outlier_p,
    screen_batch,
    screen_scores,
)
from .simlab import (
    ExperimentConfig,
    MetricRow,
    Multinomial,
    MixtureComponent,
    Normal,
    NormalMixture,
    StudentT,
    config_from_dict,
    config_to_dict,
    dirichlet_bayes_predictive,
    parametric_normal_bound,
    plugin_bound,
    population_quantile,
    run_categorical_experiment,
    run_continuous_experiment,
    run_experiment,
    student_t_quantile,
    substream_uniforms,
    trivial_randomized_set,
)

__version__ = "0.1.0"

__all__ = [
    "BhResult",
    "CalibrationSet",
    "Category",
    "Classifier",
    "DensityRatio",
    "DomainError",
    "ExperimentConfig",
    "FiniteSet",
    "InputError",
    "Interval",
    "JointLaw",
    "LabelCounts",
    "LabelSet",
    "LabeledSample",
    "MetricRow",
    "MixtureComponent",
    "Multinomial",
    "Normal",
    "NormalMixture",
    "NumericalError",
    "OutlierBatch",
    "PValueResult",
    "PacTarget",
    "PopulationPMF",
    "RSelection",
    "RandomizedSet",
    "Real",
    "RegressionModels",
    "ScoreBag",
    "ScoreEvaluationError",
    "ScoreFunction",
    "ToleranceThreshold",
    "WeightVector",
    "add_tiebreak_noise",
    "bh_procedure",
    "categorical_p_closed_form",
    "classification_threshold_set",
    "config_from_dict",
    "config_to_dict",
    "conformal_p",
    "covariate_shift_weights",
    "coverage_fluctuation_sd",
    "cqr_interval",
    "cumulative_probability_set",
    "dirichlet_bayes_predictive",
    "empirical_quantile",
    "exact_level",
    "mean_residual_interval",
    "mondrian_p",
    "multinomial_score",
    "multinomial_score_function",
    "one_sided_upper_bound",
    "oracle_set",
    "order_statistic",
    "outlier_p",
    "parametric_normal_bound",
    "permutation_weights_bruteforce",
    "plugin_bound",
    "population_quantile",
    "prediction_set_by_inversion",
    "regularized_incomplete_beta",
    "run_categorical_experiment",
    "run_continuous_experiment",
    "run_experiment",
    "screen_batch",
    "screen_scores",
    "select_r_marginal",
    "select_r_pac",
    "student_t_quantile",
    "substream_uniforms",
    "tolerance_threshold",
    "trivial_randomized_set",
    "unseen_label_rule",
    "weighted_p",
    "weighted_prediction_set",
]

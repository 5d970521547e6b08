"""Generalize randomized-trial treatment effects to target populations.

Trial subjects are reweighted by their inverse odds of trial membership
so the weighted trial resembles a chosen target population; the package
provides the weighted-difference and outcome-model effect estimators, a
full set of variance estimators (estimating-equation sandwich, survey
linearization, coefficient linear combinations, three bootstrap
schemes), and Monte Carlo drivers for studying them against finite and
infinite population targets.
"""

__version__ = "0.1.0"

from .data_model import (
    CombinedSample,
    EstimateReport,
    SubjectRow,
    VarianceEntry,
    load_csv,
    validate,
    write_csv,
)
from .estimators import (
    EstimatorId,
    FitKind,
    ModelFitResult,
    OutcomeModelSpec,
    fit_outcome_model,
    ipw_estimate,
    pate_from_model,
    point_estimate,
    survey_mean_estimate,
)
from .ps_weights import (
    PSModelFit,
    WeightVector,
    compute_weights,
    fit_ps_logistic,
    overlap_delta_p,
)
from .simulation import (
    DEFAULT_SIGMA,
    MonteCarloConfig,
    ScenarioParams,
    SimulationReport,
    generate_dataset,
    generate_inner_trial,
    pop_covariate_mean,
    run_double_layer,
    run_single_layer,
    solve_alpha0,
    solve_beta2,
)
from .variance import (
    BootstrapConfig,
    VarianceMethodId,
    bootstrap_variance,
    confidence_interval,
    lincomb_variance,
    mest_variance,
    survey_mean_variance,
)

__all__ = [
    "BootstrapConfig",
    "CombinedSample",
    "DEFAULT_SIGMA",
    "EstimateReport",
    "EstimatorId",
    "FitKind",
    "ModelFitResult",
    "MonteCarloConfig",
    "OutcomeModelSpec",
    "PSModelFit",
    "ScenarioParams",
    "SimulationReport",
    "SubjectRow",
    "VarianceEntry",
    "VarianceMethodId",
    "WeightVector",
    "bootstrap_variance",
    "compute_weights",
    "confidence_interval",
    "fit_outcome_model",
    "fit_ps_logistic",
    "generate_dataset",
    "generate_inner_trial",
    "ipw_estimate",
    "lincomb_variance",
    "load_csv",
    "mest_variance",
    "overlap_delta_p",
    "pate_from_model",
    "point_estimate",
    "pop_covariate_mean",
    "run_double_layer",
    "run_single_layer",
    "solve_alpha0",
    "solve_beta2",
    "survey_mean_estimate",
    "survey_mean_variance",
    "validate",
    "write_csv",
]

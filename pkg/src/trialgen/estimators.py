"""Population treatment-effect point estimators.

Model-free side: the Hajek (ratio-form) weighted difference of trial arm
means, so the estimate is invariant to rescaling all weights. The survey
weighted-mean estimator is the same ratio estimator computed under a
different name, and the two ids share one code path deliberately.

Model-based side: a linear outcome model on the trial rows with optional
treatment-by-covariate interactions, fit unweighted (OLS), weighted
(WOLS), or weighted with a survey covariance (SURVEY; identical point
coefficients to WOLS). The population effect is the treatment
coefficient plus the interaction terms averaged over population rows.
The "correct" estimator variants are the same code run with interactions
present; the misspecified variants run with no interactions.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .data_model import CombinedSample
from .errors import (
    EmptyArmError,
    MissingWeightsError,
    RankDeficientError,
    ZeroWeightArmError,
)
from .ps_weights import WeightVector


class EstimatorId(str, Enum):
    OLS = "ols"
    OLS_COR = "ols_cor"
    WOLS = "wols"
    WOLS_COR = "wols_cor"
    MODSV = "modsv"
    MODSV_COR = "modsv_cor"
    SV_ONLY = "sv_only"
    IPW = "ipw"


ALL_ESTIMATORS: tuple[EstimatorId, ...] = tuple(EstimatorId)
MODEL_BASED = frozenset({
    EstimatorId.OLS, EstimatorId.OLS_COR,
    EstimatorId.WOLS, EstimatorId.WOLS_COR,
    EstimatorId.MODSV, EstimatorId.MODSV_COR,
})
WEIGHT_FREE = frozenset({EstimatorId.OLS, EstimatorId.OLS_COR})


class FitKind(str, Enum):
    OLS = "ols"
    WOLS = "wols"
    SURVEY = "survey"


@dataclass(frozen=True)
class OutcomeModelSpec:
    """Outcome-model structure: main effects plus treatment interactions.

    Empty ``interactions`` encodes the no-heterogeneity (misspecified)
    model, fixing every interaction coefficient at zero.
    """

    main_effects: tuple[str, ...]
    interactions: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "main_effects", tuple(self.main_effects))
        object.__setattr__(self, "interactions", tuple(self.interactions))
        extra = set(self.interactions) - set(self.main_effects)
        if extra:
            raise ValueError(f"interactions not among main effects: {sorted(extra)}")

    @property
    def treatment_index(self) -> int:
        """Column of the treatment coefficient in the design layout."""
        return 1 + len(self.main_effects)

    @property
    def interaction_indices(self) -> range:
        start = self.treatment_index + 1
        return range(start, start + len(self.interactions))


@dataclass(frozen=True, eq=False)
class ModelFitResult:
    """Coefficients in (intercept, mains, treatment, interactions) order."""

    coefs: np.ndarray
    cov_coefs: np.ndarray
    sigma2_hat: float
    fit_kind: FitKind
    coef_names: tuple[str, ...]


def model_spec_for(estimator: EstimatorId, sample: CombinedSample,
                   interactions: Optional[Sequence[str]] = None) -> OutcomeModelSpec:
    """Outcome-model spec for an estimator id: ``*_cor`` ids get interactions.

    Main effects are always the full covariate set; ``interactions``
    defaults to the full covariate set for the ``*_cor`` estimators.
    """
    mains = sample.covariate_names
    if estimator.value.endswith("_cor"):
        inter = tuple(interactions) if interactions is not None else mains
    else:
        inter = ()
    return OutcomeModelSpec(main_effects=mains, interactions=inter)


def _column_lookup(sample: CombinedSample, names: Sequence[str]) -> np.ndarray:
    index = {name: j for j, name in enumerate(sample.covariate_names)}
    try:
        return np.array([index[name] for name in names], dtype=np.intp)
    except KeyError as exc:
        raise RankDeficientError(f"unknown covariate {exc.args[0]!r}") from None


def hajek_arm_means(y: np.ndarray, t: np.ndarray, w: np.ndarray) -> tuple[float, float]:
    """Self-normalized weighted outcome means for the treated and control arms."""
    treated = t == 1
    control = t == 0
    if not treated.any() or not control.any():
        raise EmptyArmError("both trial arms must be nonempty")
    sw1 = float(w[treated].sum())
    sw0 = float(w[control].sum())
    if sw1 <= 0.0 or sw0 <= 0.0:
        raise ZeroWeightArmError("a trial arm carries zero total weight")
    mu1 = float((w[treated] * y[treated]).sum()) / sw1
    mu0 = float((w[control] * y[control]).sum()) / sw0
    return mu1, mu0


def ipw_estimate(sample: CombinedSample, weights: WeightVector) -> float:
    """Weighted difference of trial arm outcome means (Hajek form)."""
    trial = sample.trial_mask
    mu1, mu0 = hajek_arm_means(sample.y[trial], sample.t[trial], weights.w[trial])
    return mu1 - mu0


def survey_mean_estimate(sample: CombinedSample, weights: WeightVector) -> float:
    """Survey weighted-mean difference; the identical ratio estimator as `ipw_estimate`."""
    return ipw_estimate(sample, weights)


def trial_design(sample: CombinedSample,
                 spec: OutcomeModelSpec) -> tuple[np.ndarray, np.ndarray, tuple[str, ...]]:
    """Trial-row design matrix ``[1, X_main, T, X_inter * T]`` and outcomes."""
    trial = sample.trial_mask
    t = sample.t[trial]
    x = sample.x[trial]
    main_cols = _column_lookup(sample, spec.main_effects)
    inter_cols = _column_lookup(sample, spec.interactions)
    blocks = [np.ones((t.shape[0], 1)), x[:, main_cols], t[:, None]]
    names = ["intercept", *spec.main_effects, "t"]
    if len(inter_cols):
        blocks.append(x[:, inter_cols] * t[:, None])
        names.extend(f"t:{name}" for name in spec.interactions)
    return np.column_stack(blocks), sample.y[trial], tuple(names)


def fit_outcome_model(sample: CombinedSample, spec: OutcomeModelSpec,
                      kind: FitKind,
                      weights: Optional[WeightVector] = None) -> ModelFitResult:
    """Fit the trial outcome model and its coefficient covariance.

    OLS: least squares with covariance ``sigma2 * (D'D)^-1``. WOLS:
    weighted least squares with the precision-weight covariance
    ``sigma2_w * (D'WD)^-1`` (the weights-as-inverse-variance reading,
    which understates sampling variability under representation weights).
    SURVEY: the same point coefficients as WOLS with the with-replacement
    linearization covariance ``(D'WD)^-1 [sum w_i^2 r_i^2 d_i d_i'] (D'WD)^-1``,
    no finite-population correction.
    """
    design, y, names = trial_design(sample, spec)
    n_rows, n_coef = design.shape
    if kind is FitKind.OLS:
        w = np.ones(n_rows)
    else:
        if weights is None:
            raise MissingWeightsError(f"{kind.value} fit requires weights")
        w = weights.w[sample.trial_mask]
    sqrt_w = np.sqrt(w)
    coefs, _, rank, _ = np.linalg.lstsq(design * sqrt_w[:, None], y * sqrt_w, rcond=None)
    if rank < n_coef:
        raise RankDeficientError("trial design matrix is rank deficient")
    residuals = y - design @ coefs
    dof = n_rows - n_coef
    if dof <= 0:
        raise RankDeficientError("more coefficients than trial rows")
    sigma2 = float(w @ residuals**2) / dof
    gram = design.T @ (design * w[:, None])
    gram_inv = np.linalg.inv(gram)
    if kind is FitKind.SURVEY:
        scaled = design * (w * residuals)[:, None]
        cov = gram_inv @ (scaled.T @ scaled) @ gram_inv
    else:
        cov = sigma2 * gram_inv
    return ModelFitResult(
        coefs=coefs, cov_coefs=cov, sigma2_hat=sigma2, fit_kind=kind, coef_names=names,
    )


def pate_from_model(fit: ModelFitResult, spec: OutcomeModelSpec,
                    sample: CombinedSample) -> float:
    """Population effect: treatment coefficient plus population-averaged interactions."""
    effect = float(fit.coefs[spec.treatment_index])
    if spec.interactions:
        inter_cols = _column_lookup(sample, spec.interactions)
        pop_means = sample.x[sample.pop_mask][:, inter_cols].mean(axis=0)
        lam = fit.coefs[list(spec.interaction_indices)]
        effect += float(pop_means @ lam)
    return effect


_FIT_KIND_FOR = {
    EstimatorId.OLS: FitKind.OLS,
    EstimatorId.OLS_COR: FitKind.OLS,
    EstimatorId.WOLS: FitKind.WOLS,
    EstimatorId.WOLS_COR: FitKind.WOLS,
    EstimatorId.MODSV: FitKind.SURVEY,
    EstimatorId.MODSV_COR: FitKind.SURVEY,
}


def point_estimate(estimator: EstimatorId, sample: CombinedSample,
                   weights: Optional[WeightVector] = None,
                   interactions: Optional[Sequence[str]] = None) -> float:
    """Point estimate for any estimator id on one sample."""
    estimator = EstimatorId(estimator)
    if estimator is EstimatorId.IPW:
        if weights is None:
            raise MissingWeightsError("ipw requires weights")
        return ipw_estimate(sample, weights)
    if estimator is EstimatorId.SV_ONLY:
        if weights is None:
            raise MissingWeightsError("sv_only requires weights")
        return survey_mean_estimate(sample, weights)
    spec = model_spec_for(estimator, sample, interactions)
    fit = fit_outcome_model(sample, spec, _FIT_KIND_FOR[estimator], weights)
    return pate_from_model(fit, spec, sample)


def point_estimates(sample: CombinedSample, weights: Optional[WeightVector],
                    estimators: Sequence[EstimatorId],
                    interactions: Optional[Sequence[str]] = None,
                    ) -> tuple[dict[EstimatorId, float], dict[EstimatorId, Exception]]:
    """Point estimates for several estimators, sharing fits among ids.

    WOLS/MODSV (and their ``_cor`` variants) share one weighted solve;
    IPW/SV_ONLY share the Hajek computation. Per-id failures are returned
    rather than raised so resampling loops can discard selectively.
    """
    wanted = [EstimatorId(e) for e in estimators]
    points: dict[EstimatorId, float] = {}
    failures: dict[EstimatorId, Exception] = {}

    def attempt(ids: list[EstimatorId], compute) -> None:
        present = [e for e in ids if e in wanted]
        if not present:
            return
        try:
            value = compute()
        except Exception as exc:  # recorded per id; caller decides policy
            for e in present:
                failures[e] = exc
            return
        for e in present:
            points[e] = value

    attempt([EstimatorId.IPW, EstimatorId.SV_ONLY],
            lambda: ipw_estimate(sample, _require(weights)))
    for base, kind in ((EstimatorId.OLS, FitKind.OLS),
                       (EstimatorId.WOLS, FitKind.WOLS)):
        for cor in (False, True):
            est = EstimatorId(base.value + ("_cor" if cor else ""))
            twin = EstimatorId(("modsv" + ("_cor" if cor else ""))) if base is EstimatorId.WOLS else None
            ids = [est] if twin is None else [est, twin]

            def compute(e=est):
                spec = model_spec_for(e, sample, interactions)
                fit = fit_outcome_model(sample, spec, _FIT_KIND_FOR[e],
                                        None if e in WEIGHT_FREE else _require(weights))
                return pate_from_model(fit, spec, sample)

            attempt(ids, compute)
    ordered = {e: points[e] for e in wanted if e in points}
    return ordered, failures


def _require(weights: Optional[WeightVector]) -> WeightVector:
    if weights is None:
        raise MissingWeightsError("estimator requires weights")
    return weights

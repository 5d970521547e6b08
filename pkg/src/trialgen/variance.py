"""Variance estimators for the population treatment-effect estimators.

Four families:

* ``mest`` -- the stacked-estimating-equation (sandwich) standard error
  for the weighted-difference estimator. Its influence function couples
  the arm-mean equations with the membership-model score, so the
  variability of the estimated weights is propagated. Every expectation
  is replaced by a plain average over all rows, trial and population.
* ``survey_lin`` -- the fixed-weight survey linearization of the
  weighted mean difference. Weights are treated as known, so weight
  estimation contributes nothing here by design.
* ``lincomb`` -- the fixed-covariate linear-combination variance for
  model-based estimators, read off the coefficient covariance of the
  outcome-model fit.
* ``rb`` / ``wsb`` / ``wawsb`` -- bootstrap schemes that rerun the full
  pipeline (membership refit, weights, estimator) on each resample:
  everything redrawn; trial and population redrawn separately with their
  sizes fixed; treated and control arms redrawn separately with the
  population rows held fixed.

Resamples on which an estimator fails are discarded and counted; more
than ``max_failure_rate`` failures is an error. Per-resample streams are
derived from (seed, resample index) so parallel execution cannot change
results.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np
from scipy.special import ndtri

from .data_model import CombinedSample
from .errors import (
    EmptyArmError,
    SingularInformationError,
    TooManyFailedResamplesError,
)
from .estimators import (
    ALL_ESTIMATORS,
    MODEL_BASED,
    WEIGHT_FREE,
    EstimatorId,
    ModelFitResult,
    OutcomeModelSpec,
    hajek_arm_means,
    point_estimates,
)
from .ps_weights import WeightVector, compute_weights, fit_ps_logistic, ps_design
from .rng import substream


class VarianceMethodId(str, Enum):
    MEST = "mest"
    SURVEY_LIN = "survey_lin"
    LINCOMB = "lincomb"
    RB = "rb"
    WSB = "wsb"
    WAWSB = "wawsb"


BOOTSTRAP_METHODS = frozenset({
    VarianceMethodId.RB, VarianceMethodId.WSB, VarianceMethodId.WAWSB,
})

_WEIGHTED_MEAN_ESTIMATORS = frozenset({EstimatorId.IPW, EstimatorId.SV_ONLY})

APPLICABILITY: dict[VarianceMethodId, frozenset[EstimatorId]] = {
    VarianceMethodId.MEST: _WEIGHTED_MEAN_ESTIMATORS,
    VarianceMethodId.SURVEY_LIN: _WEIGHTED_MEAN_ESTIMATORS,
    VarianceMethodId.LINCOMB: MODEL_BASED,
    VarianceMethodId.RB: frozenset(ALL_ESTIMATORS),
    VarianceMethodId.WSB: frozenset(ALL_ESTIMATORS),
    VarianceMethodId.WAWSB: frozenset(ALL_ESTIMATORS),
}

# The conventional pairing: each estimator's own parametric method.
PARAMETRIC_FOR: dict[EstimatorId, VarianceMethodId] = {
    EstimatorId.OLS: VarianceMethodId.LINCOMB,
    EstimatorId.OLS_COR: VarianceMethodId.LINCOMB,
    EstimatorId.WOLS: VarianceMethodId.LINCOMB,
    EstimatorId.WOLS_COR: VarianceMethodId.LINCOMB,
    EstimatorId.MODSV: VarianceMethodId.LINCOMB,
    EstimatorId.MODSV_COR: VarianceMethodId.LINCOMB,
    EstimatorId.SV_ONLY: VarianceMethodId.SURVEY_LIN,
    EstimatorId.IPW: VarianceMethodId.MEST,
}


def is_applicable(method: VarianceMethodId, estimator: EstimatorId) -> bool:
    return EstimatorId(estimator) in APPLICABILITY[VarianceMethodId(method)]


@dataclass(frozen=True)
class BootstrapConfig:
    """Scheme, resample count, and root seed for one bootstrap run."""

    scheme: VarianceMethodId
    reps: int = 500
    seed: int = 0
    max_failure_rate: float = 0.10

    def __post_init__(self) -> None:
        object.__setattr__(self, "scheme", VarianceMethodId(self.scheme))
        if self.scheme not in BOOTSTRAP_METHODS:
            raise ValueError(f"{self.scheme.value} is not a bootstrap scheme")
        if self.reps < 2:
            raise ValueError("a sample standard deviation needs at least 2 resamples")


def confidence_interval(point: float, se: float, level: float = 0.95) -> tuple[float, float]:
    """Symmetric normal-quantile interval around the point estimate."""
    if not 0.0 < level < 1.0:
        raise ValueError("level must be in (0, 1)")
    if se < 0.0:
        raise ValueError("standard error must be nonnegative")
    z = float(ndtri((1.0 + level) / 2.0))
    return point - z * se, point + z * se


def mest_variance(sample: CombinedSample, fit, weights: WeightVector) -> float:
    """Sandwich standard error of the weighted-difference estimator.

    Implements the influence function of the stacked system (membership
    score plus the two weighted arm-mean equations): per-row arm residual
    terms normalized by the average arm weight, minus a membership-score
    correction through the inverse of the averaged information-style
    matrix ``mean(e (1 - e) d d')``. Returns ``sqrt(sum(I_i^2)) / n``.
    """
    n = sample.n
    trial = sample.trial_mask
    t = np.where(trial, sample.t, 0.0)
    y = np.where(trial, sample.y, 0.0)
    s = trial.astype(np.float64)
    w = weights.w
    e = weights.ps

    treated_w = t * s * w
    control_w = (1.0 - t) * s * w
    mu1, mu0 = hajek_arm_means(sample.y[trial], sample.t[trial], w[trial])
    a1 = treated_w.mean()
    a0 = control_w.mean()

    design = ps_design(sample)
    resid1 = treated_w * (y - mu1)
    resid0 = control_w * (y - mu0)
    cross1 = design.T @ resid1 / n
    cross0 = design.T @ resid0 / n
    info = design.T @ (design * (e * (1.0 - e))[:, None]) / n
    try:
        correction = np.linalg.solve(info, cross1 / a1 - cross0 / a0)
    except np.linalg.LinAlgError:
        raise SingularInformationError("averaged membership information is singular") from None
    influence = resid1 / a1 - resid0 / a0 - (design @ correction) * (s - e)
    return float(np.sqrt(influence @ influence)) / n


def survey_mean_variance(sample: CombinedSample, weights: WeightVector) -> float:
    """Fixed-weight linearization SE of the weighted mean difference.

    Per arm: ``sum(w^2 (y - mu)^2) * n_a / (n_a - 1) / (sum w)^2``; the
    arm variances add. Weights are not re-estimated, so this is the
    classic survey computation that ignores weight-estimation noise.
    """
    trial = sample.trial_mask
    t = sample.t[trial]
    y = sample.y[trial]
    w = weights.w[trial]
    mu1, mu0 = hajek_arm_means(y, t, w)
    total = 0.0
    for arm, mu in ((1.0, mu1), (0.0, mu0)):
        mask = t == arm
        n_arm = int(mask.sum())
        if n_arm < 2:
            raise EmptyArmError(f"arm {int(arm)} has fewer than 2 subjects; variance undefined")
        w_arm = w[mask]
        dev = y[mask] - mu
        total += float((w_arm**2 * dev**2).sum()) * n_arm / (n_arm - 1) / float(w_arm.sum()) ** 2
    return float(np.sqrt(total))


def lincomb_variance(fit: ModelFitResult, spec: OutcomeModelSpec,
                     sample: CombinedSample) -> float:
    """Fixed-covariate SE of (treatment coefficient + averaged interactions).

    ``sqrt(c' V c)`` with ``c = [1, population means of interacted
    covariates]`` and ``V`` the corresponding block of the fit's
    coefficient covariance.
    """
    idx = [spec.treatment_index, *spec.interaction_indices]
    contrast = np.ones(len(idx))
    if spec.interactions:
        cols = [sample.covariate_names.index(name) for name in spec.interactions]
        contrast[1:] = sample.x[sample.pop_mask][:, cols].mean(axis=0)
    block = fit.cov_coefs[np.ix_(idx, idx)]
    return float(np.sqrt(contrast @ block @ contrast))


def resample_indices(scheme: VarianceMethodId, sample: CombinedSample,
                     rng: np.random.Generator) -> np.ndarray:
    """Row indices for one bootstrap resample under the given scheme."""
    scheme = VarianceMethodId(scheme)
    n = sample.n
    if scheme is VarianceMethodId.RB:
        return rng.integers(0, n, n)
    trial_idx = sample.trial_indices
    pop_idx = sample.pop_indices
    if scheme is VarianceMethodId.WSB:
        m, n_pop = trial_idx.size, pop_idx.size
        return np.concatenate([
            trial_idx[rng.integers(0, m, m)],
            pop_idx[rng.integers(0, n_pop, n_pop)],
        ])
    if scheme is VarianceMethodId.WAWSB:
        treated = trial_idx[sample.t[trial_idx] == 1]
        control = trial_idx[sample.t[trial_idx] == 0]
        if treated.size == 0 or control.size == 0:
            raise EmptyArmError("both trial arms must be nonempty to resample within arms")
        return np.concatenate([
            treated[rng.integers(0, treated.size, treated.size)],
            control[rng.integers(0, control.size, control.size)],
            pop_idx,
        ])
    raise ValueError(f"{scheme} is not a bootstrap scheme")


def bootstrap_standard_errors(sample: CombinedSample,
                              estimators: Sequence[EstimatorId],
                              config: BootstrapConfig,
                              interactions: Optional[Sequence[str]] = None,
                              ps_max_iter: int = 100,
                              ) -> tuple[dict[EstimatorId, float], dict[EstimatorId, int]]:
    """Bootstrap SEs for several estimators, sharing resamples and refits.

    Returns ``(ses, discarded)`` where ``discarded[e]`` counts resamples
    on which estimator ``e`` failed. Raises
    :class:`TooManyFailedResamplesError` if any estimator loses more than
    ``config.max_failure_rate`` of its resamples.
    """
    wanted = [EstimatorId(e) for e in estimators]
    draws: dict[EstimatorId, list[float]] = {e: [] for e in wanted}
    discarded: dict[EstimatorId, int] = {e: 0 for e in wanted}
    needs_weights = any(e not in WEIGHT_FREE for e in wanted)
    for b in range(config.reps):
        rng = substream(config.seed, b)
        resample = sample.subset(resample_indices(config.scheme, sample, rng))
        weights = None
        if needs_weights:
            try:
                fit = fit_ps_logistic(resample, max_iter=ps_max_iter)
                weights = compute_weights(fit, resample)
            except Exception:
                weights = None  # per-estimator failures recorded below
        points, _ = point_estimates(resample, weights, wanted, interactions)
        for e in wanted:
            if e in points and np.isfinite(points[e]):
                draws[e].append(points[e])
            else:
                discarded[e] += 1
    ses: dict[EstimatorId, float] = {}
    for e in wanted:
        if discarded[e] > config.max_failure_rate * config.reps:
            raise TooManyFailedResamplesError(
                f"{discarded[e]} of {config.reps} resamples failed for {e.value} "
                f"under {config.scheme.value}"
            )
        ses[e] = float(np.std(draws[e], ddof=1))
    return ses, discarded


def bootstrap_variance(sample: CombinedSample, estimator: EstimatorId,
                       config: BootstrapConfig,
                       interactions: Optional[Sequence[str]] = None) -> float:
    """Bootstrap SE of one estimator; full pipeline rerun per resample."""
    ses, _ = bootstrap_standard_errors(sample, [estimator], config, interactions)
    return ses[EstimatorId(estimator)]

import numpy as np
import pytest

from trialgen.errors import EmptyArmError, MissingWeightsError, RankDeficientError
from trialgen.estimators import (
    EstimatorId,
    FitKind,
    OutcomeModelSpec,
    fit_outcome_model,
    hajek_arm_means,
    ipw_estimate,
    model_spec_for,
    pate_from_model,
    point_estimate,
    point_estimates,
    survey_mean_estimate,
)
from trialgen.ps_weights import WeightVector, compute_weights, fit_ps_logistic
from trialgen.rng import substream
from trialgen.simulation import ScenarioParams, generate_dataset

from conftest import make_sample


def weight_vector(sample, w_trial):
    w = np.zeros(sample.n)
    w[sample.trial_mask] = w_trial
    return WeightVector(w=w, ps=np.full(sample.n, 0.5))


def test_ipw_worked_example():
    # arm 1: (y=2,w=1),(y=4,w=3); arm 0: (y=1,w=1),(y=3,w=1) -> 3.5 - 2 = 1.5
    sample = make_sample([0.1, 0.2, 0.3, 0.4], [1, 1, 0, 0], [2.0, 4.0, 1.0, 3.0], [0.5])
    weights = weight_vector(sample, [1.0, 3.0, 1.0, 1.0])
    assert ipw_estimate(sample, weights) == pytest.approx(1.5, abs=1e-12)


def test_ipw_equal_weights_is_mean_difference():
    rng = substream(7, 0)
    y = rng.normal(size=10)
    t = np.array([1, 0] * 5, dtype=float)
    sample = make_sample(rng.random(10), t, y, [0.5])
    weights = weight_vector(sample, np.full(10, 3.7))
    expected = y[t == 1].mean() - y[t == 0].mean()
    assert ipw_estimate(sample, weights) == pytest.approx(expected, abs=1e-12)


def test_ipw_scale_invariance():
    sample = make_sample([0.1, 0.2, 0.3, 0.4], [1, 1, 0, 0], [2.0, 4.0, 1.0, 3.0], [0.5])
    base = weight_vector(sample, [1.0, 3.0, 1.0, 2.0])
    scaled = weight_vector(sample, np.array([1.0, 3.0, 1.0, 2.0]) * 817.3)
    assert ipw_estimate(sample, base) == pytest.approx(
        ipw_estimate(sample, scaled), abs=1e-12)


def test_ipw_location_equivariance():
    rng = substream(11, 0)
    y = rng.normal(size=12)
    t = np.array([1, 0] * 6, dtype=float)
    w = rng.random(12) + 0.5
    sample = make_sample(rng.random(12), t, y, [0.5])
    shifted = make_sample(sample.x[sample.trial_mask, 0], t, y + 5.5, [0.5])
    assert ipw_estimate(sample, weight_vector(sample, w)) == pytest.approx(
        ipw_estimate(shifted, weight_vector(shifted, w)), abs=1e-10)


def test_sv_only_identical_to_ipw(medium_sample):
    weights = compute_weights(fit_ps_logistic(medium_sample), medium_sample)
    assert survey_mean_estimate(medium_sample, weights) == ipw_estimate(
        medium_sample, weights)


def test_empty_arm_raises():
    sample = make_sample([0.1, 0.2], [1, 1], [1.0, 2.0], [0.5])
    with pytest.raises(EmptyArmError):
        ipw_estimate(sample, weight_vector(sample, [1.0, 1.0]))


def test_hajek_means_values():
    mu1, mu0 = hajek_arm_means(
        np.array([2.0, 4.0, 1.0, 3.0]), np.array([1.0, 1.0, 0.0, 0.0]),
        np.array([1.0, 3.0, 1.0, 1.0]))
    assert mu1 == pytest.approx(3.5) and mu0 == pytest.approx(2.0)


def noiseless_sample(n=40, beta=(0.5, 0.3, -0.7, 1.2), seed=3):
    rng = substream(seed, 0)
    x = rng.random(n)
    t = np.tile([1.0, 0.0], n // 2)
    b0, b1, b2, b3 = beta
    y = b0 + b1 * x + b2 * t + b3 * x * t
    return make_sample(x, t, y, rng.random(15))


def test_noiseless_recovery_all_kinds():
    truth = (0.5, 0.3, -0.7, 1.2)
    sample = noiseless_sample(beta=truth)
    weights = weight_vector(sample, substream(4, 0).random(40) + 0.2)
    spec = OutcomeModelSpec(("x",), ("x",))
    for kind, w in ((FitKind.OLS, None), (FitKind.WOLS, weights), (FitKind.SURVEY, weights)):
        fit = fit_outcome_model(sample, spec, kind, w)
        assert np.abs(fit.coefs - np.array(truth)).max() < 1e-10


def test_wols_and_survey_share_coefficients_not_covariance(medium_sample):
    weights = compute_weights(fit_ps_logistic(medium_sample), medium_sample)
    spec = OutcomeModelSpec(("x",), ("x",))
    wols = fit_outcome_model(medium_sample, spec, FitKind.WOLS, weights)
    survey = fit_outcome_model(medium_sample, spec, FitKind.SURVEY, weights)
    assert np.array_equal(wols.coefs, survey.coefs)
    assert not np.allclose(wols.cov_coefs, survey.cov_coefs)


def test_ols_matches_normal_equations_oracle():
    # Six rows, independent solve of (D'D) b = D'y.
    x = np.array([0.05, 0.35, 0.5, 0.65, 0.8, 0.95])
    t = np.array([1.0, 0.0, 1.0, 0.0, 1.0, 0.0])
    y = np.array([1.2, -0.3, 0.8, 0.1, 2.0, -0.5])
    sample = make_sample(x, t, y, [0.4, 0.6])
    spec = OutcomeModelSpec(("x",), ("x",))
    fit = fit_outcome_model(sample, spec, FitKind.OLS)
    design = np.column_stack([np.ones(6), x, t, x * t])
    oracle = np.linalg.solve(design.T @ design, design.T @ y)
    assert np.abs(fit.coefs - oracle).max() < 1e-10


def test_wls_matches_weighted_normal_equations():
    x = np.array([0.05, 0.35, 0.5, 0.65, 0.8, 0.95])
    t = np.array([1.0, 0.0, 1.0, 0.0, 1.0, 0.0])
    y = np.array([1.2, -0.3, 0.8, 0.1, 2.0, -0.5])
    w = np.array([0.5, 1.5, 2.0, 0.7, 1.1, 0.9])
    sample = make_sample(x, t, y, [0.4, 0.6])
    spec = OutcomeModelSpec(("x",), ())
    fit = fit_outcome_model(sample, spec, FitKind.WOLS, weight_vector(sample, w))
    design = np.column_stack([np.ones(6), x, t])
    oracle = np.linalg.solve(design.T @ (design * w[:, None]), design.T @ (w * y))
    assert np.abs(fit.coefs - oracle).max() < 1e-10


def test_missing_weights_raises(medium_sample):
    spec = OutcomeModelSpec(("x",), ())
    with pytest.raises(MissingWeightsError):
        fit_outcome_model(medium_sample, spec, FitKind.WOLS)


def test_rank_deficient_design_detected():
    # Duplicate covariate makes the design collinear.
    x = np.array([[0.1, 0.1], [0.4, 0.4], [0.6, 0.6], [0.9, 0.9]])
    sample_x = np.concatenate([x, [[0.5, 0.5]]])
    from trialgen.data_model import CombinedSample
    sample = CombinedSample(
        s=np.array([1, 1, 1, 1, 0], dtype=np.int8),
        t=np.array([1.0, 0.0, 1.0, 0.0, np.nan]),
        y=np.array([1.0, 2.0, 3.0, 4.0, np.nan]),
        x=sample_x, covariate_names=("a", "b"),
    )
    with pytest.raises(RankDeficientError):
        fit_outcome_model(sample, OutcomeModelSpec(("a", "b"), ()), FitKind.OLS)


def test_pate_no_interactions_returns_treatment_coef():
    sample = noiseless_sample()
    spec = OutcomeModelSpec(("x",), ())
    fit = fit_outcome_model(sample, spec, FitKind.OLS)
    assert pate_from_model(fit, spec, sample) == float(fit.coefs[spec.treatment_index])


def test_pate_direct_substitution():
    # gamma = -0.7, lambda = 1, population mean 0.4 -> -0.3.
    sample = make_sample([0.1, 0.5, 0.3, 0.7], [1, 0, 1, 0], [0.0, 0.0, 0.0, 0.0],
                         [0.2, 0.4, 0.6])
    spec = OutcomeModelSpec(("x",), ("x",))
    from trialgen.estimators import ModelFitResult
    fit = ModelFitResult(coefs=np.array([0.0, 0.0, -0.7, 1.0]),
                         cov_coefs=np.eye(4), sigma2_hat=1.0,
                         fit_kind=FitKind.OLS,
                         coef_names=("intercept", "x", "t", "t:x"))
    assert pate_from_model(fit, spec, sample) == pytest.approx(-0.3, abs=1e-12)


def test_model_spec_for_cor_and_plain(medium_sample):
    cor = model_spec_for(EstimatorId.WOLS_COR, medium_sample)
    plain = model_spec_for(EstimatorId.WOLS, medium_sample)
    assert cor.interactions == medium_sample.covariate_names
    assert plain.interactions == ()


def test_outcome_spec_rejects_unknown_interactions():
    with pytest.raises(ValueError):
        OutcomeModelSpec(("x",), ("z",))


def test_point_estimates_share_fits(medium_sample):
    weights = compute_weights(fit_ps_logistic(medium_sample), medium_sample)
    points, failures = point_estimates(medium_sample, weights, list(EstimatorId))
    assert not failures
    assert points[EstimatorId.WOLS] == points[EstimatorId.MODSV]
    assert points[EstimatorId.WOLS_COR] == points[EstimatorId.MODSV_COR]
    assert points[EstimatorId.IPW] == points[EstimatorId.SV_ONLY]
    for est in EstimatorId:
        assert points[est] == pytest.approx(
            point_estimate(est, medium_sample, weights), abs=1e-12)


def test_all_estimators_unbiased_without_selection_or_heterogeneity():
    # alpha1 = 0 and beta3 = 0: every estimator's MC mean matches the truth.
    params = ScenarioParams.from_targets(alpha1=0.0, beta3=0.0, pate=-0.3,
                                         n_total=1000, target_p=0.3)
    reps = 200
    sums = {est: [] for est in EstimatorId}
    for r in range(reps):
        sample = generate_dataset(params, substream(61, 0, r))
        weights = compute_weights(fit_ps_logistic(sample), sample)
        points, failures = point_estimates(sample, weights, list(EstimatorId))
        assert not failures
        for est, value in points.items():
            sums[est].append(value)
    for est, values in sums.items():
        values = np.array(values)
        bound = 3.0 * values.std(ddof=1) / np.sqrt(reps)
        assert abs(values.mean() - params.true_pate) < bound, est

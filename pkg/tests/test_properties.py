"""Property suite: invariants that must hold for arbitrary valid inputs."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from trialgen.data_model import CombinedSample, load_csv, validate, write_csv
from trialgen.estimators import EstimatorId, ipw_estimate, survey_mean_estimate
from trialgen.ps_weights import WeightVector, compute_weights, fit_ps_logistic
from trialgen.rng import substream
from trialgen.simulation import MonteCarloConfig, run_single_layer
from trialgen.variance import VarianceMethodId, confidence_interval, resample_indices

from conftest import make_sample


def weight_vector(sample, w_trial):
    w = np.zeros(sample.n)
    w[sample.trial_mask] = w_trial
    return WeightVector(w=w, ps=np.full(sample.n, 0.5))


finite_y = st.floats(-1e3, 1e3, allow_nan=False)
positive_w = st.floats(1e-3, 1e3, allow_nan=False)


@st.composite
def arm_data(draw, min_per_arm=2, max_per_arm=6):
    n1 = draw(st.integers(min_per_arm, max_per_arm))
    n0 = draw(st.integers(min_per_arm, max_per_arm))
    y = draw(st.lists(finite_y, min_size=n1 + n0, max_size=n1 + n0))
    w = draw(st.lists(positive_w, min_size=n1 + n0, max_size=n1 + n0))
    t = [1.0] * n1 + [0.0] * n0
    return np.array(y), np.array(t), np.array(w)


@given(arm_data(), st.floats(1e-6, 1e6))
@settings(max_examples=80, deadline=None)
def test_ipw_weight_scale_invariance(data, scale):
    y, t, w = data
    x = np.linspace(0.05, 0.95, len(y))
    sample = make_sample(x, t, y, [0.5])
    base = ipw_estimate(sample, weight_vector(sample, w))
    scaled = ipw_estimate(sample, weight_vector(sample, w * scale))
    assert scaled == pytest.approx(base, abs=1e-12 * max(1.0, abs(base)) + 1e-12)


@given(arm_data(), st.floats(-100, 100))
@settings(max_examples=50, deadline=None)
def test_ipw_location_equivariance(data, shift):
    y, t, w = data
    x = np.linspace(0.05, 0.95, len(y))
    sample = make_sample(x, t, y, [0.5])
    shifted = make_sample(x, t, y + shift, [0.5])
    vec = weight_vector(sample, w)
    vec_shift = weight_vector(shifted, w)
    base = ipw_estimate(sample, vec)
    assert ipw_estimate(shifted, vec_shift) == pytest.approx(
        base, abs=1e-9 * (1 + abs(shift) + abs(base)))


@given(arm_data())
@settings(max_examples=50, deadline=None)
def test_sv_only_equals_ipw_exactly(data):
    y, t, w = data
    sample = make_sample(np.linspace(0.05, 0.95, len(y)), t, y, [0.5])
    vec = weight_vector(sample, w)
    assert survey_mean_estimate(sample, vec) == ipw_estimate(sample, vec)


@st.composite
def combined_samples(draw):
    n_trial = draw(st.integers(2, 8))
    n_pop = draw(st.integers(1, 8))
    p = draw(st.integers(1, 3))
    x = draw(hnp.arrays(np.float64, (n_trial + n_pop, p),
                        elements=st.floats(-100, 100, allow_nan=False)))
    y = draw(hnp.arrays(np.float64, (n_trial,), elements=finite_y))
    t = draw(hnp.arrays(np.int8, (n_trial,), elements=st.integers(0, 1)))
    names = tuple(f"x{j}" for j in range(p))
    return CombinedSample(
        s=np.concatenate([np.ones(n_trial, dtype=np.int8), np.zeros(n_pop, dtype=np.int8)]),
        t=np.concatenate([t.astype(float), np.full(n_pop, np.nan)]),
        y=np.concatenate([y, np.full(n_pop, np.nan)]),
        x=x, covariate_names=names,
    )


@given(combined_samples())
@settings(max_examples=60, deadline=None)
def test_csv_round_trip_identity(tmp_path_factory, sample):
    path = tmp_path_factory.mktemp("csv") / "sample.csv"
    write_csv(sample, path)
    back = load_csv(path)
    assert np.array_equal(back.s, sample.s)
    assert np.array_equal(back.t, sample.t, equal_nan=True)
    assert np.array_equal(back.y, sample.y, equal_nan=True)
    assert np.array_equal(back.x, sample.x)
    assert back.covariate_names == sample.covariate_names


@given(combined_samples())
@settings(max_examples=40, deadline=None)
def test_validate_pure_and_stable(sample):
    assert validate(sample) == validate(sample)


@given(st.floats(-10, 10), st.floats(0, 5), st.floats(0.5, 0.99))
@settings(max_examples=80, deadline=None)
def test_confidence_interval_properties(point, se, level):
    low, high = confidence_interval(point, se, level)
    assert low <= point <= high
    wider_low, wider_high = confidence_interval(point, se, level + 0.009)
    assert wider_high - wider_low >= high - low - 1e-12


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=20, deadline=None)
def test_wawsb_never_touches_population(medium_sample, seed):
    idx = resample_indices(VarianceMethodId.WAWSB, medium_sample, substream(seed))
    resample = medium_sample.subset(idx)
    assert np.array_equal(resample.x[resample.pop_mask],
                          medium_sample.x[medium_sample.pop_mask])
    t_new = resample.t[resample.trial_mask]
    t_old = medium_sample.t[medium_sample.trial_mask]
    assert (t_new == 1).sum() == (t_old == 1).sum()
    assert (t_new == 0).sum() == (t_old == 0).sum()


def test_report_bit_identical_across_worker_counts(table4_params):
    cfg_base = dict(
        estimators=(EstimatorId.IPW, EstimatorId.OLS),
        methods=("parametric", "wsb"),
        bootstrap_reps=25,
        bootstrap_subsample=4,
    )
    single = run_single_layer(table4_params, reps=12, seed=2024,
                              cfg=MonteCarloConfig(workers=1, **cfg_base))
    eight = run_single_layer(table4_params, reps=12, seed=2024,
                             cfg=MonteCarloConfig(workers=8, **cfg_base))
    assert single.to_dict() == eight.to_dict()


def test_weights_zero_exactly_on_population(medium_sample):
    weights = compute_weights(fit_ps_logistic(medium_sample), medium_sample)
    assert np.all(weights.w[medium_sample.pop_mask] == 0.0)
    assert np.all(weights.w[medium_sample.trial_mask] > 0.0)
    assert np.isfinite(weights.w).all()

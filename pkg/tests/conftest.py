import numpy as np
import pytest

from trialgen.data_model import CombinedSample
from trialgen.rng import substream
from trialgen.simulation import ScenarioParams, generate_dataset


@pytest.fixture(scope="session")
def table4_params() -> ScenarioParams:
    """Reference setting: moderate selection and heterogeneity, n=3000."""
    return ScenarioParams.from_targets(
        alpha1=4.0, beta3=-0.6, pate=-0.3, n_total=3000, alpha0=-3.76,
    )


@pytest.fixture(scope="session")
def medium_sample(table4_params) -> CombinedSample:
    """One fixed n=3000 replicate from the reference setting."""
    return generate_dataset(table4_params, substream(20240801, 0, 0))


@pytest.fixture(scope="session")
def small_sample() -> CombinedSample:
    """Fixed n=40 sample with a workable trial, for slow oracles."""
    params = ScenarioParams.from_targets(
        alpha1=2.0, beta3=-0.6, pate=-0.3, n_total=40, target_p=0.35,
    )
    sample = generate_dataset(params, substream(907, 0, 0))
    assert sample.n_trial >= 8
    return sample


@pytest.fixture
def tiny_logistic_data() -> tuple[np.ndarray, np.ndarray]:
    """Eight (x, s) pairs with overlapping classes, so the MLE is finite."""
    x = np.array([0.10, 0.20, 0.35, 0.40, 0.60, 0.70, 0.85, 0.90])
    s = np.array([0, 0, 1, 0, 1, 0, 1, 1], dtype=np.int8)
    return x, s


def make_sample(x_trial, t_trial, y_trial, x_pop) -> CombinedSample:
    """Hand-assemble a combined sample from trial and population pieces."""
    x_trial = np.asarray(x_trial, dtype=float)
    x_pop = np.asarray(x_pop, dtype=float)
    m, n_pop = len(x_trial), len(x_pop)
    return CombinedSample(
        s=np.concatenate([np.ones(m, dtype=np.int8), np.zeros(n_pop, dtype=np.int8)]),
        t=np.concatenate([np.asarray(t_trial, dtype=float), np.full(n_pop, np.nan)]),
        y=np.concatenate([np.asarray(y_trial, dtype=float), np.full(n_pop, np.nan)]),
        x=np.concatenate([x_trial, x_pop])[:, None],
        covariate_names=("x",),
    )

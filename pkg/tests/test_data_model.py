import numpy as np
import pytest

from trialgen.data_model import (
    CombinedSample,
    SubjectRow,
    load_csv,
    validate,
    write_csv,
)
from trialgen.errors import (
    MalformedNumberError,
    MissingColumnError,
    MissingTrialValueError,
    NonBinaryIndicatorError,
    OutcomeOnPopulationRowError,
    TreatmentOnPopulationRowError,
)

from conftest import make_sample


def write_lines(tmp_path, lines, name="data.csv"):
    path = tmp_path / name
    path.write_text("\n".join(lines) + "\n")
    return path


def test_load_csv_round_trip_counts(tmp_path):
    path = write_lines(tmp_path, [
        "s,t,y,x",
        "1,1,2.5,0.1",
        "1,0,1.5,0.9",
        "0,,,0.4",
        "0,NA,NA,0.6",
    ])
    sample = load_csv(path)
    assert sample.n == 4
    assert sample.n_trial == 2
    assert sample.n_pop == 2
    assert sample.covariate_names == ("x",)
    assert np.isnan(sample.t[2]) and np.isnan(sample.y[3])


def test_load_csv_schema_mapping(tmp_path):
    path = write_lines(tmp_path, [
        "in_trial,arm,dbp,age,bmi",
        "1,0,3.0,50,22",
        "1,1,4.0,60,25",
        "0,,,55,27",
    ])
    sample = load_csv(path, {"s": "in_trial", "t": "arm", "y": "dbp", "x": ["age", "bmi"]})
    assert sample.covariate_names == ("age", "bmi")
    assert sample.x.shape == (3, 2)


def test_nonbinary_indicator_rejected(tmp_path):
    path = write_lines(tmp_path, ["s,t,y,x", "2,1,1.0,0.5"])
    with pytest.raises(NonBinaryIndicatorError):
        load_csv(path)


def test_nonbinary_treatment_rejected(tmp_path):
    path = write_lines(tmp_path, ["s,t,y,x", "1,3,1.0,0.5"])
    with pytest.raises(NonBinaryIndicatorError):
        load_csv(path)


def test_trial_row_without_outcome_names_row(tmp_path):
    path = write_lines(tmp_path, [
        "s,t,y,x",
        "1,1,2.0,0.1",
        "1,0,,0.2",
        "0,,,0.3",
    ])
    with pytest.raises(MissingTrialValueError, match="row 2"):
        load_csv(path)


def test_population_outcome_rejected(tmp_path):
    path = write_lines(tmp_path, ["s,t,y,x", "1,1,2.0,0.1", "0,,3.0,0.2"])
    with pytest.raises(OutcomeOnPopulationRowError, match="row 2"):
        load_csv(path)


def test_population_treatment_rejected(tmp_path):
    path = write_lines(tmp_path, ["s,t,y,x", "1,1,2.0,0.1", "0,1,,0.2"])
    with pytest.raises(TreatmentOnPopulationRowError):
        load_csv(path)


def test_missing_column_reported(tmp_path):
    path = write_lines(tmp_path, ["s,t,x", "1,1,0.5"])
    with pytest.raises(MissingColumnError, match="y"):
        load_csv(path)


def test_malformed_number_names_row_and_column(tmp_path):
    path = write_lines(tmp_path, ["s,t,y,x", "1,1,abc,0.5"])
    with pytest.raises(MalformedNumberError, match="y"):
        load_csv(path)


def test_round_trip_identity(tmp_path):
    sample = make_sample(
        x_trial=[0.125, 1 / 3, 0.875],
        t_trial=[1, 0, 1],
        y_trial=[2.5, -0.75, np.pi],
        x_pop=[0.2, 0.6180339887498949],
    )
    path = tmp_path / "round.csv"
    write_csv(sample, path)
    back = load_csv(path)
    assert np.array_equal(back.s, sample.s)
    assert np.array_equal(back.t, sample.t, equal_nan=True)
    assert np.array_equal(back.y, sample.y, equal_nan=True)
    assert np.array_equal(back.x, sample.x)
    assert back.covariate_names == sample.covariate_names


def test_validate_clean_sample_is_empty(medium_sample):
    assert validate(medium_sample) == []


def test_validate_reports_empty_control_arm():
    sample = make_sample([0.1, 0.9], [1, 1], [1.0, 2.0], [0.5])
    diags = validate(sample)
    assert any("empty control arm" in d for d in diags)


def test_validate_reports_empty_population():
    sample = make_sample([0.1, 0.9], [1, 0], [1.0, 2.0], [])
    diags = validate(sample)
    assert any("empty target population" in d for d in diags)


def test_validate_is_pure():
    sample = make_sample([0.1, 0.9], [1, 1], [1.0, 2.0], [])
    first = validate(sample)
    second = validate(sample)
    assert first == second


def test_sample_arrays_read_only(medium_sample):
    with pytest.raises(ValueError):
        medium_sample.y[0] = 99.0


def test_subset_preserves_row_content(medium_sample):
    idx = np.array([5, 3, 3, 10])
    sub = medium_sample.subset(idx)
    assert sub.n == 4
    assert np.array_equal(sub.x[1], medium_sample.x[3])
    assert np.array_equal(sub.x[2], medium_sample.x[3])


def test_rows_and_from_rows_round_trip():
    sample = make_sample([0.3, 0.4], [0, 1], [1.0, 2.0], [0.9])
    rebuilt = CombinedSample.from_rows(list(sample.rows()), sample.covariate_names)
    assert np.array_equal(rebuilt.x, sample.x)
    assert np.array_equal(rebuilt.t, sample.t, equal_nan=True)


def test_constructor_rejects_outcome_on_population():
    with pytest.raises(OutcomeOnPopulationRowError):
        CombinedSample(
            s=np.array([1, 0], dtype=np.int8),
            t=np.array([1.0, np.nan]),
            y=np.array([1.0, 2.0]),
            x=np.array([[0.1], [0.2]]),
            covariate_names=("x",),
        )


def test_subject_row_shape():
    row = SubjectRow(s=0, t=None, y=None, x=(0.5,))
    assert row.t is None and row.y is None

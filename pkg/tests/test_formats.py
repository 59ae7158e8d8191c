import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mcdist import formats
from mcdist.errors import ParseError
from mcdist.estimators import CurveEstimatorParams, LinearModel, NeuralModel, n_weights
from mcdist.evaluation import DistanceStats, EvaluationReport, TrialRecord
from mcdist.features import FeatureRecord, FeatureVector

finite = st.floats(allow_nan=False, allow_infinity=False)


def fv(values, n_r=3):
    return FeatureVector(*values, n_r=n_r)


@given(values=st.lists(finite, min_size=9, max_size=9), d=st.one_of(st.none(), st.floats(1e-3, 1e6)), n_r=st.integers(0, 10**6))
def test_features_round_trip(tmp_path_factory, values, d, n_r):
    path = tmp_path_factory.mktemp("f") / "f.csv"
    rec = FeatureRecord("trial,with comma", fv(values, n_r), d)
    formats.write_features(path, [rec])
    (back,) = formats.read_features(path)
    assert back == rec


def test_features_sorted_by_trial(tmp_path):
    recs = [FeatureRecord(t, fv(range(9)), 100.0) for t in ("b", "c", "a")]
    formats.write_features(tmp_path / "f.csv", recs)
    assert [r.trial_id for r in formats.read_features(tmp_path / "f.csv")] == ["a", "b", "c"]


def test_features_without_count_column(tmp_path):
    path = tmp_path / "f.csv"
    path.write_text(",".join(formats.FEATURE_HEADER[:-1]) + "\nx,1,2,3,4,5,6,7,8,0.5,120\n")
    (rec,) = formats.read_features(path)
    assert rec.features.n_r == 0 and rec.distance == 120.0 and rec.features.emission_time == 0.5


def test_features_bad_header(tmp_path):
    path = tmp_path / "f.csv"
    path.write_text("trial_id,foo\n")
    with pytest.raises(ParseError):
        formats.read_features(path)


def test_features_bad_value_line(tmp_path):
    path = tmp_path / "f.csv"
    path.write_text(",".join(formats.FEATURE_HEADER) + "\nx,1,2,3,4,5,6,7,8,0.5,120,3\ny,1,2,3,4,5,6,7,zz,0.5,120,3\n")
    with pytest.raises(ParseError) as exc:
        formats.read_features(path)
    assert exc.value.line == 3


def test_params_round_trip(tmp_path):
    p = CurveEstimatorParams.published()
    formats.write_params(tmp_path / "p.csv", p)
    assert formats.read_params(tmp_path / "p.csv") == p
    assert (tmp_path / "p.csv").read_text().splitlines()[0] == "model_name,emission_time_s,a,b,rmse"


def test_params_unknown_row(tmp_path):
    path = tmp_path / "p.csv"
    path.write_text("model_name,emission_time_s,a,b,rmse\nlaser,0.5,1,2,3\n")
    with pytest.raises(ParseError):
        formats.read_params(path)


@given(theta=st.lists(finite, min_size=3, max_size=3))
def test_mlr_model_round_trip(tmp_path_factory, theta):
    path = tmp_path_factory.mktemp("m") / "m.txt"
    m = LinearModel(theta, ("x", "y"))
    formats.write_model(path, m)
    back = formats.read_model(path)
    assert back.theta.tobytes() == m.theta.tobytes() and back.feature_order == ("x", "y")


def test_nnr_model_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    m = NeuralModel(3, 2, rng.normal(size=n_weights(3, 2)), rng.normal(size=3), rng.normal(size=3) + 5,
                    100.0, 200.0, "linear", ("a", "b", "c"))
    formats.write_model(tmp_path / "m.txt", m)
    back = formats.read_model(tmp_path / "m.txt")
    assert back.weights.tobytes() == m.weights.tobytes()
    assert back.x_min.tobytes() == m.x_min.tobytes() and back.x_max.tobytes() == m.x_max.tobytes()
    assert (back.n_inputs, back.n_hidden, back.y_min, back.y_max, back.output_activation, back.feature_order) == (
        3, 2, 100.0, 200.0, "linear", ("a", "b", "c"),
    )


def test_curves_model_round_trip(tmp_path):
    p = CurveEstimatorParams.published()
    formats.write_model(tmp_path / "m.txt", p)
    assert formats.read_model(tmp_path / "m.txt") == p


@pytest.mark.parametrize("text", ["", "something else\n", "mcdist-model 99\nkind mlr\n", "mcdist-model 1\nkind oracle\n",
                                  "mcdist-model 1\nkind mlr\n"])
def test_bad_model_files(tmp_path, text):
    path = tmp_path / "m.txt"
    path.write_text(text)
    with pytest.raises(ParseError):
        formats.read_model(path)


def test_predictions_round_trip(tmp_path):
    rows = [("b", 0.5, 120.0, 121.5, "ok"), ("a", 0.25, None, None, "DomainError")]
    formats.write_predictions(tmp_path / "p.csv", rows)
    assert formats.read_predictions(tmp_path / "p.csv") == sorted(rows)


def test_report_files(tmp_path):
    recs = [TrialRecord(0, "a", 100.0, 101.0), TrialRecord(0, "b", 110.0, 108.0)]
    rep = EvaluationReport("mlr", math.sqrt(2.5), [DistanceStats(100.0, 1, 101.0, 0.0, 1.0),
                                                   DistanceStats(110.0, 1, 108.0, 0.0, 200 / 110)],
                           1, 7, (0.7, 0.0, 0.3), 0, [math.sqrt(2.5)], recs)
    paths = formats.write_report(str(tmp_path / "r"), rep)
    summary = open(paths[0]).read().splitlines()
    assert summary[0].startswith("method,rmse_cm,trials,excluded,seed")
    assert summary[1].split(",")[:5] == ["mlr", repr(math.sqrt(2.5)), "1", "0", "7"]
    per_d = open(paths[1]).read().splitlines()
    assert per_d[0] == "method,distance_cm,count,mean_cm,std_cm,mape_pct"
    assert len(per_d) == 3
    assert len(open(paths[2]).read().splitlines()) == 3


def test_velocity_file(tmp_path):
    formats.write_velocity_profile(tmp_path / "v.csv", {0.25: {100.0: 25.0}}, {100.0: 25.0})
    assert (tmp_path / "v.csv").read_text().splitlines() == [
        "emission_time_s,distance_cm,mean_velocity_cm_per_s",
        "0.25,100,25",
        "mean,100,25",
    ]

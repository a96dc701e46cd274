import json

import numpy as np
import pandas as pd
import pytest

from ordrobust.dataset import (
    DataError,
    OrdinalOutcome,
    dense_ids,
    load_dataset,
    load_elicitation,
    make_dataset,
    write_dataset,
)


def _write(tmp_path, df, cfg):
    csv = tmp_path / "d.csv"
    df.to_csv(csv, index=False)
    return csv, cfg


def test_five_row_csv(tmp_path):
    df = pd.DataFrame({"y": [1, 2, 3, 2, 1], "x": [0.1, 0.5, 0.9, 0.2, 0.4]})
    csv, cfg = _write(tmp_path, df, {"outcome": "y", "labels": [1, 2, 3],
                                     "covariates": [{"name": "x"}], "focal": ["x"]})
    d = load_dataset(csv, cfg)
    assert (d.N, d.K, d.design.M) == (5, 3, 2)
    assert d.design.names == ["const", "x"]


def test_code_out_of_range(tmp_path):
    df = pd.DataFrame({"y": [0, 5, 11, 3], "x": [1.0, 2.0, 3.0, 5.0]})
    csv, cfg = _write(tmp_path, df, {"outcome": "y", "labels": list(range(11)),
                                     "covariates": [{"name": "x"}]})
    with pytest.raises(DataError, match="code out of range"):
        load_dataset(csv, cfg)


def test_listwise_deletion_counts(tmp_path):
    rng = np.random.default_rng(0)
    x = rng.normal(size=100)
    x[17] = np.nan
    df = pd.DataFrame({"y": rng.integers(1, 4, 100), "x": x})
    csv, cfg = _write(tmp_path, df, {"outcome": "y", "labels": [1, 2, 3],
                                     "covariates": [{"name": "x"}]})
    d = load_dataset(csv, cfg)
    assert d.N == 99 and d.dropped == 1


def test_unknown_column(tmp_path):
    df = pd.DataFrame({"y": [1, 2, 3, 1], "x": [1.0, 2.0, 3.0, 4.0]})
    csv, cfg = _write(tmp_path, df, {"outcome": "y", "covariates": [{"name": "z"}]})
    with pytest.raises(DataError, match="unknown column"):
        load_dataset(csv, cfg)


def test_too_few_rows(tmp_path):
    df = pd.DataFrame({"y": [1, 2, 3], "x": [1.0, 2.0, 4.0]})
    csv, cfg = _write(tmp_path, df, {"outcome": "y", "covariates": [{"name": "x"}]})
    with pytest.raises(DataError, match="complete rows"):
        load_dataset(csv, cfg)


def test_non_monotone_labels(tmp_path):
    df = pd.DataFrame({"y": [1, 2, 3, 1], "x": [1.0, 2.0, 3.0, 4.0]})
    csv, cfg = _write(tmp_path, df, {"outcome": "y", "labels": [1, 3, 2],
                                     "covariates": [{"name": "x"}]})
    with pytest.raises(DataError, match="increasing"):
        load_dataset(csv, cfg)


def test_categorical_expansion(tmp_path):
    rng = np.random.default_rng(1)
    region = rng.choice(["north", "south", "west"], 60)
    df = pd.DataFrame({"y": rng.integers(1, 5, 60), "region": region, "x": rng.normal(size=60)})
    csv, cfg = _write(tmp_path, df, {
        "outcome": "y", "labels": [1, 2, 3, 4],
        "covariates": [{"name": "region", "type": "categorical", "reference": "south"},
                       {"name": "x"}]})
    d = load_dataset(csv, cfg)
    names = d.design.names
    assert names == ["const", "region[north]", "region[west]", "x"]
    ind = d.design.X[:, 1:3]
    ref = (region == "south").astype(float)
    np.testing.assert_array_equal(ind.sum(axis=1), 1.0 - ref)


def test_roundtrip_bit_exact(tmp_path, rng):
    X = rng.normal(size=(40, 2)) * np.array([1e-7, 3e5])
    codes = rng.integers(1, 6, 40)
    d = make_dataset(codes, X, ["a", "b"], labels=[0, 2.5, 5, 7.5, 10],
                     cluster_ids=rng.integers(0, 4, 40), se_type="clustered")
    write_dataset(d, tmp_path / "d.csv", tmp_path / "c.json")
    d2 = load_dataset(tmp_path / "d.csv", json.loads((tmp_path / "c.json").read_text()))
    np.testing.assert_array_equal(d2.outcome.codes, d.outcome.codes)
    np.testing.assert_array_equal(d2.outcome.labels, d.outcome.labels)
    assert np.array_equal(d2.design.X, d.design.X)
    np.testing.assert_array_equal(d2.design.cluster_ids, d.design.cluster_ids)


def test_validation_rules(rng):
    X = rng.normal(size=(30, 2))
    codes = rng.integers(1, 4, 30)
    with pytest.raises(DataError, match="constant"):
        make_dataset(codes, np.column_stack([X[:, 0], np.ones(30)]), ["a", "b"])
    with pytest.raises(DataError, match="focal"):
        make_dataset(codes, X, ["a", "b"], focal=["c"])
    with pytest.raises(DataError, match="intercept"):
        make_dataset(codes, X, ["a", "b"], focal=["const"])
    with pytest.raises(DataError, match="cluster"):
        make_dataset(codes, X, ["a", "b"], se_type="clustered")
    with pytest.raises(DataError, match="two clusters"):
        make_dataset(codes, X, ["a", "b"], se_type="clustered", cluster_ids=np.zeros(30))
    with pytest.raises(DataError, match="more observations"):
        make_dataset(codes[:3], X[:3], ["a", "b"])
    with pytest.raises(DataError):
        make_dataset(codes, X, ["a", "b"], unit_ids=np.arange(30) % 3,
                     instruments={"a": rng.normal(size=30)})


def test_outcome_properties():
    o = OrdinalOutcome(np.array([1, 1, 4, 4]), np.array([0.0, 1.0, 2.0, 3.0]))
    assert o.empty_categories == [2, 3]
    assert o.equidistant and o.L == 3.0
    np.testing.assert_array_equal(o.values, [0, 0, 3, 3])
    with pytest.raises(DataError):
        OrdinalOutcome(np.array([0, 1]), np.array([1.0, 2.0]))


def test_dense_ids():
    np.testing.assert_array_equal(dense_ids(["b", "a", "b", "c"]), [1, 0, 1, 2])


def _elicit_cfg(tmp_path, df, **cfg):
    csv = tmp_path / "e.csv"
    df.to_csv(csv, index=False)
    return csv, {"labels": list(range(11)), **cfg}


def test_elicitation_two_arm(tmp_path):
    df = pd.DataFrame({"arm": ["u", "l", "u"], "d": [3, 5, 10], "c": [2.5, 7.25, 9.0]})
    csv, cfg = _elicit_cfg(tmp_path, df, arm="arm", arm_values={"u": "unprompted",
                                                                 "l": "linear_prompted"},
                           discrete="d", continuous="c")
    recs = load_elicitation(csv, cfg)
    assert [r.arm for r in recs] == ["unprompted", "linear_prompted", "unprompted"]
    assert all(r.discrete_response is not None and r.continuous_response is not None for r in recs)


def test_elicitation_sliders(tmp_path):
    cols = {f"s{k}": [float(k), float(k) + 0.1] for k in range(11)}
    csv, cfg = _elicit_cfg(tmp_path, pd.DataFrame(cols), sliders=list(cols))
    recs = load_elicitation(csv, cfg)
    assert len(recs) == 2 and recs[0].slider_positions.shape == (11,)
    csv, cfg = _elicit_cfg(tmp_path, pd.DataFrame(cols), sliders=list(cols)[:9])
    with pytest.raises(DataError, match="slider"):
        load_elicitation(csv, cfg)


def test_elicitation_continuous_range(tmp_path):
    df = pd.DataFrame({"c": [2.0, 10.5]})
    csv, cfg = _elicit_cfg(tmp_path, df, continuous="c")
    with pytest.raises(DataError, match="outside"):
        load_elicitation(csv, cfg)

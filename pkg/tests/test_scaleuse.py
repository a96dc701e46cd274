import numpy as np
import pytest

from ordrobust.dataset import DataError, ElicitationRecord
from ordrobust.scaleuse import (
    bootstrap_ci,
    estimate_from_records,
    gamma_analysis,
    objective_subjective,
    pav,
    quantile_match,
    rescale,
    slider_cost,
    worst_case_gamma,
)
from ordrobust.synth import GeneratorSpec, generate_elicitation, generate_gamma_data, preset_labels


def test_pav_pools_violators():
    fit, repaired = pav([1.0, 3.0, 2.0])
    np.testing.assert_allclose(fit, [1.0, 2.5, 2.5])
    assert repaired
    fit, repaired = pav([1.0, 2.0])
    assert not repaired
    fit, _ = pav([3.0, 1.0], weights=[1.0, 3.0])
    np.testing.assert_allclose(fit, [1.5, 1.5])


def test_rescale():
    np.testing.assert_allclose(rescale([2.0, 3.0, 6.0], 0.0, 8.0), [0.0, 2.0, 8.0])
    with pytest.raises(ValueError):
        rescale([1.0, 1.0], 0, 1)


def test_quantile_match_hand_example():
    # F = (0.5, 0.75); type-7 quantiles of the prompted arm are 0.4 and 1.6
    est = quantile_match([0, 0, 1, 2], [0.0, 0.2, 0.4, 1.6, 2.0], [0.0, 1.0, 2.0], n_boot=0)
    np.testing.assert_allclose(est.implied_labels, [0.0, 1.5, 2.0])
    assert est.c.c == pytest.approx(0.5)
    assert est.interpolated == [] and not est.monotonicity_repaired


def test_quantile_match_interpolates_empty_category():
    est = quantile_match([0, 0, 2, 3], np.linspace(0, 3, 9), [0.0, 1.0, 2.0, 3.0], n_boot=0)
    assert est.interpolated == [1]
    assert np.all(np.diff(est.implied_labels) >= 0)


def test_quantile_match_population_limit():
    labels = preset_labels("convex", 11, 0.10, L=10.0)
    spec = GeneratorSpec(n=200_000, labels=labels, beta=[0.0], seed=4)
    recs, truth = generate_elicitation(spec, "linear_prompting")
    est = estimate_from_records(recs, np.arange(11.0), "linear_prompting", n_boot=0)
    np.testing.assert_allclose(est.implied_labels, labels, atol=0.03)
    assert est.c.c == pytest.approx(truth["cost"], abs=0.01)


def test_quantile_match_validation():
    with pytest.raises(DataError):
        quantile_match([0, 5], [0.5], [0.0, 1.0, 2.0])
    with pytest.raises(DataError):
        quantile_match([0, 1], [2.5], [0.0, 1.0, 2.0])


def test_objective_subjective_hand_example():
    cats = [0, 0, 1, 1, 2]
    obj = [0.0, 2.0, 2.0, 4.0, 4.0]
    est = objective_subjective(cats, obj, [0.0, 1.0, 2.0], n_boot=0)
    # category means 1, 3, 4 map onto [0, 2]
    np.testing.assert_allclose(est.implied_labels, [0.0, 4 / 3, 2.0])
    est = objective_subjective([0, 2, 2], [1.0, 3.0, 5.0], [0.0, 1.0, 2.0], n_boot=0)
    assert est.interpolated == [1]
    np.testing.assert_allclose(est.implied_labels, [0.0, 1.0, 2.0])


def test_objective_subjective_repairs_monotonicity():
    est = objective_subjective([0, 1, 2], [0.0, 3.0, 2.0], [0.0, 1.0, 2.0], n_boot=0)
    assert est.monotonicity_repaired
    np.testing.assert_allclose(est.implied_labels, [0.0, 2.0, 2.0])


def test_slider_cost_excludes_flat_rows():
    labels = np.arange(5.0)
    S = np.array([[0, 1, 2, 3, 4], [0, 0.5, 1, 2, 4], [2, 2, 2, 2, 2]], float)
    est = slider_cost(S, labels, n_boot=0)
    assert est.n_excluded == 1 and est.n_used == 2
    assert est.c.c == pytest.approx(est.per_respondent.mean())
    assert est.per_respondent[0] == 0.0
    with pytest.raises(DataError):
        slider_cost(S[:, :4], labels)


def test_bootstrap_is_seed_deterministic():
    x = np.random.default_rng(0).normal(size=50)
    a = bootstrap_ci(np.mean, (x,), 200, seed=7)
    b = bootstrap_ci(np.mean, (x,), 200, seed=7)
    c = bootstrap_ci(np.mean, (x,), 200, seed=8)
    assert a[:2] == b[:2] and np.array_equal(a[2], b[2])
    assert a[:2] != c[:2]
    assert a[0] < x.mean() < a[1]


def test_bootstrap_retries_then_raises():
    calls = {"n": 0}

    def flaky(x):
        calls["n"] += 1
        if calls["n"] % 2:
            raise ValueError("degenerate replicate")
        return float(x.mean())

    lo, hi, reps = bootstrap_ci(flaky, (np.arange(10.0),), 10, seed=0)
    assert np.all(np.isfinite(reps))

    def always(x):
        raise ValueError("never")

    with pytest.raises(ValueError):
        bootstrap_ci(always, (np.arange(3.0),), 2, seed=0, max_retries=3)


def test_estimate_from_records_dispatch():
    recs = [ElicitationRecord("unprompted", discrete_response=k, objective_value=float(k))
            for k in (0, 1, 2, 2)]
    est = estimate_from_records(recs, [0, 1, 2], "objective_subjective", n_boot=20)
    assert est.method == "objective_subjective" and est.n_boot == 20
    with pytest.raises(DataError):
        estimate_from_records(recs, [0, 1, 2], "sliders")
    with pytest.raises(ValueError):
        estimate_from_records(recs, [0, 1, 2], "tea_leaves")


def test_gamma_recovers_planted_effect():
    data, cont = generate_gamma_data(4000, beta=(5, 0.4, -0.3), noise=1.0, planted=[0.3, 0.0],
                                     seed=3)
    rep = gamma_analysis(data, cont, n_boot=200, seed=1)
    g = dict(zip(rep.names, rep.gamma))
    se = dict(zip(rep.names, rep.se_gamma))
    assert g["x1"] == pytest.approx(0.3, abs=4 * se["x1"] + 0.02)
    assert abs(g["x2"]) < 4 * se["x2"] + 0.01
    assert rep.to_dict()["x1"]["assumption2_flag"] is False


def test_gamma_null_is_insignificant():
    data, cont = generate_gamma_data(1500, seed=11)
    rep = gamma_analysis(data, cont, n_boot=200, seed=2)
    assert np.all(np.abs(rep.gamma[1:]) < 3 * rep.se_gamma[1:])


def test_worst_case_gamma_ranges():
    data, cont = generate_gamma_data(1500, beta=(5, 0.3, -0.3), noise=0.7, cont_noise=0.1,
                                     seed=5, base="latent")
    rows = worst_case_gamma(data, cont, "x1", [0.0, 0.1, 0.3])
    assert rows[0]["disc_lo"] == pytest.approx(rows[0]["disc_hi"])
    for prev, row in zip(rows, rows[1:]):
        assert row["disc_lo"] <= prev["disc_lo"] + 1e-12
        assert row["cont_hi"] >= prev["cont_hi"] - 1e-12
    for row in rows:
        assert row["gamma_lo"] == pytest.approx(row["cont_lo"] - row["disc_lo"])

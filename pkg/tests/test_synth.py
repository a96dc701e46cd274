import numpy as np
import pytest

from ordrobust.cost import cost
from ordrobust.synth import (
    PRESETS,
    GeneratorSpec,
    boundary_thresholds,
    generate_elicitation,
    generate_gamma_data,
    generate_regression_data,
    generate_studies,
    midpoint_categories,
    preset_labels,
)


@pytest.mark.parametrize("kind", [p for p in PRESETS if p != "linear"])
@pytest.mark.parametrize("c", [0.05, 0.10, 0.15, 0.30])
def test_presets_hit_target_cost(kind, c):
    labels = preset_labels(kind, 11, c, l1=1.0, L=10.0)
    assert labels[0] == pytest.approx(1.0) and labels[-1] == pytest.approx(11.0)
    assert np.all(np.diff(labels) > 0)
    assert cost(np.diff(labels)).c == pytest.approx(c, abs=1e-9)


def test_preset_linear_and_errors():
    np.testing.assert_allclose(preset_labels("linear", 5, 0.0), [0, 1, 2, 3, 4])
    with pytest.raises(ValueError):
        preset_labels("linear", 5, 0.1)
    with pytest.raises(ValueError):
        preset_labels("wavy", 5, 0.1)


def test_midpoint_ties_go_up():
    np.testing.assert_array_equal(midpoint_categories([0.5, 0.49, 1.5, 9.0], np.arange(3.0)),
                                  [2, 1, 3, 3])


def test_boundary_thresholds_reproduce_labels():
    labels = preset_labels("concave", 6, 0.2, L=5.0)
    t = boundary_thresholds(labels)
    # uniform latent: CDF shares at the bin bounds, read back on the same scale
    L = labels[-1] - labels[0]
    F = (t - labels[0]) / L
    raw = np.append(labels[0] + L * F, labels[-1])
    implied = labels[0] + (raw - raw[0]) * L / (raw[-1] - raw[0])
    np.testing.assert_allclose(implied, labels, atol=1e-12)


def test_regression_generator_is_seeded():
    spec = GeneratorSpec(n=300, labels=np.arange(1, 8.0), beta=[4.0, 0.5, -0.2], seed=9)
    a, truth = generate_regression_data(spec)
    b, _ = generate_regression_data(spec)
    np.testing.assert_array_equal(a.outcome.codes, b.outcome.codes)
    assert truth["cost"] == 0.0
    assert a.design.focal_names == ["x1", "x2"]


def test_regression_generator_degenerate():
    spec = GeneratorSpec(n=50, labels=np.arange(1, 4.0), beta=[100.0, 0.0], noise=0.01)
    with pytest.raises(Exception, match="degenerate"):
        generate_regression_data(spec)


@pytest.mark.parametrize("method", ["linear_prompting", "objective_subjective", "sliders"])
def test_elicitation_shapes(method):
    spec = GeneratorSpec(n=100, labels=np.arange(11.0), beta=[0.0], seed=2)
    recs, truth = generate_elicitation(spec, method)
    assert truth["cost"] == 0.0
    if method == "linear_prompting":
        arms = [r.arm for r in recs]
        assert arms.count("unprompted") == arms.count("linear_prompted") == 100
    elif method == "sliders":
        assert all(r.slider_positions.shape == (11,) for r in recs)
        assert min(r.slider_positions.min() for r in recs) >= 0.0
    else:
        assert all(r.objective_value is not None for r in recs)
    with pytest.raises(ValueError):
        generate_elicitation(spec, "smoke_signals")


def test_gamma_data_bases():
    data, cont = generate_gamma_data(300, seed=1)
    assert data.K == 11 and cont.min() >= 0 and cont.max() <= 10
    _, cont2 = generate_gamma_data(300, seed=1, base="latent")
    assert not np.array_equal(cont, cont2)
    with pytest.raises(ValueError):
        generate_gamma_data(10, base="moon")


def test_studies_standardized():
    studies = generate_studies(3, {"a": 0.5, "b": -0.3}, n=400, seed=4)
    assert len(studies) == 3
    for d in studies:
        v = d.outcome.values
        assert v.mean() == pytest.approx(0.0, abs=1e-12) and v.std() == pytest.approx(1.0)

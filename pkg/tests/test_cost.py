import numpy as np
import pytest

from ordrobust.cost import (
    GapVector,
    alpha_for,
    band_for,
    cost,
    cost_from_variance,
    default_epsilon,
    discretize,
    gap_variance,
    max_var,
    variance_budget,
    variance_form,
)


def test_max_var_frozen_values():
    assert max_var(11, 10) == 9.0
    assert max_var(3, 2) == 1.0
    assert max_var(5, 4) == pytest.approx(3.0, abs=1e-15)


def test_max_var_is_single_jump_variance():
    for K in (3, 5, 8):
        w = np.zeros(K - 1)
        w[0] = 7.0
        assert gap_variance(w) == pytest.approx(max_var(K, 7.0), rel=1e-14)


def test_alpha_policies():
    assert alpha_for(11, "log10") == 2.0
    assert alpha_for(101, "log10") == pytest.approx(4.0)
    assert alpha_for(4, "fixed2") == 2.0
    with pytest.raises(ValueError):
        alpha_for(2, "log10")
    with pytest.raises(ValueError):
        alpha_for(5, "cubic")


def test_equal_gaps_cost_zero():
    assert cost(np.full(10, 1.0)).c == 0.0


def test_single_jump_limit():
    K, L = 11, 10.0
    eps = default_epsilon(K, L)
    w = np.full(K - 1, eps)
    w[3] = L - (K - 2) * eps
    assert 1.0 - cost(w).c < 1e-3


def test_k2_degenerate():
    c = cost([3.0])
    assert c.c == 0.0 and c.degenerate


def test_bands():
    assert band_for(0.15) == "plausible"
    assert band_for(0.150001) == "marginal"
    assert band_for(0.30) == "marginal"
    assert band_for(0.31) == "implausible"
    assert cost([1, 1, 4]).band == "implausible"


def test_cost_scale_invariant():
    w = np.array([0.5, 1.0, 2.5])
    assert cost(w).c == pytest.approx(cost(3.7 * w).c, rel=1e-14)


def test_variance_budget_inverts_cost():
    for c in (0.0, 0.1, 0.5, 1.0):
        v = variance_budget(c, 6, 5.0, 2.0)
        assert cost_from_variance(v, 6, 5.0, 2.0) == pytest.approx(c, abs=1e-15)


def test_cost_from_variance_vectorized():
    v = np.array([0.0, 0.25, 1.0, 2.0])
    out = cost_from_variance(v, 3, 2.0, 2.0)
    np.testing.assert_allclose(out, [0.0, 0.5, 1.0, 1.0])


def test_variance_form_matches_gap_variance(rng):
    P = variance_form(6)
    w = rng.uniform(0.1, 2, 5)
    assert w @ P @ w == pytest.approx(gap_variance(w), rel=1e-12)


def test_gap_vector_validation():
    with pytest.raises(ValueError):
        GapVector(np.array([1.0, -0.1, 1.1]), 2.0)
    with pytest.raises(ValueError):
        GapVector(np.array([1.0, 1.0]), 3.0)
    g = GapVector.from_labels([0, 1, 3, 6])
    assert g.L == 6 and g.K == 4
    np.testing.assert_allclose(g.labels(), [0, 1, 3, 6])


def test_discretize_rounds_half_up():
    o = discretize([0.0, 0.05, 0.049, 0.35, 10.0], 101, 10.0)
    np.testing.assert_array_equal(o.codes, [1, 2, 1, 5, 101])
    assert o.K == 101 and o.labels[-1] == pytest.approx(10.0)

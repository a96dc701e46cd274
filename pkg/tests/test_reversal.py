import numpy as np
import pytest

from conftest import random_dataset
from ordrobust.cost import cost, default_epsilon
from ordrobust.optimize import grid_oracle, near_vertex
from ordrobust.regression import DichotomizedBattery, fit_battery
from ordrobust.reversal import (
    beta_range_at_budget,
    is_reversible,
    min_cost_sign_reversal,
    min_cost_target_ratio,
    ratio_bounds,
    ratio_bounds_from_cuts,
    ratio_range_at_budget,
    sign_pattern,
    strict_reversal_gaps,
)


def _battery(**cuts):
    return DichotomizedBattery.from_cut_coefficients(cuts)


def test_sign_pattern_ignores_negligible():
    np.testing.assert_array_equal(sign_pattern([1.0, -1e-15, -2.0]), [1, 0, -1])
    assert not is_reversible([1.0, 0.0, 2.0])
    assert is_reversible([1.0, -0.1])


def test_k3_worked_example():
    b = _battery(m=[-0.5, 0.2])
    rep = min_cost_sign_reversal(b, "m", alpha=2.0)
    assert rep.reversible
    np.testing.assert_allclose(rep.argmin_gaps.w, [4 / 7, 10 / 7], atol=1e-12)
    assert rep.min_cost.c == pytest.approx(3 / 7, abs=1e-9)
    assert rep.band == "implausible"
    assert rep.beta_at_identity == pytest.approx(0.3)


def test_irreversible_reports_no_cost():
    rep = min_cost_sign_reversal(_battery(m=[0.4, 0.1, 0.3]), "m")
    assert not rep.reversible and rep.min_cost is None and rep.band is None


def test_strict_reversal_flips_sign():
    b = _battery(m=[-0.5, 0.2, -0.1])
    rep = min_cost_sign_reversal(b, "m")
    w = strict_reversal_gaps(rep, b, "m")
    assert np.sign(b.b("m") @ w) == -np.sign(rep.beta_at_identity)
    assert w.sum() == pytest.approx(b.L)


def test_floor_limited_reversal():
    b = _battery(m=[-1.0, 1e-9])
    rep = min_cost_sign_reversal(b, "m")
    assert rep.reversible and rep.floor_limited and rep.min_cost.c == 1.0


def test_reversal_cost_matches_grid(rng):
    # brute-force lattice check on fitted batteries with K = 4
    for _ in range(5):
        data = random_dataset(rng, N=200, K=4, M=2)
        bat = fit_battery(data)
        for f in ("x1", "x2"):
            rep = min_cost_sign_reversal(bat, f)
            if not rep.reversible:
                continue
            b = bat.b(f)
            s = np.sign(rep.beta_at_identity)
            _, oc = grid_oracle(lambda W: np.where(s * (W @ b) <= 0,
                                                   [cost(w).c for w in W], np.inf),
                                4, bat.L, 120)
            assert rep.min_cost.c <= oc + 1e-9


def test_beta_range_monotone_and_anchored():
    b = _battery(m=[-0.5, 0.2, -0.3, 0.1])
    eps = default_epsilon(5, 4.0)
    prev = None
    for c in np.linspace(0, 1, 11):
        lo, hi, w_lo, w_hi = beta_range_at_budget(b, "m", c)
        assert lo <= hi
        assert cost(w_lo).c <= c + 1e-9 and cost(w_hi).c <= c + 1e-9
        if prev is not None:
            assert lo <= prev[0] + 1e-12 and hi >= prev[1] - 1e-12
        prev = (lo, hi)
    lo0, hi0, _, _ = beta_range_at_budget(b, "m", 0.0)
    assert lo0 == pytest.approx(0.5) and hi0 == pytest.approx(0.5)
    bb = b.b("m")
    vert = [bb @ near_vertex(4, k, 4.0, eps) for k in range(4)]
    assert prev[0] == pytest.approx(min(vert), rel=1e-9)
    assert prev[1] == pytest.approx(max(vert), rel=1e-9)
    with pytest.raises(ValueError):
        beta_range_at_budget(b, "m", 1.5)


def test_ratio_bounds_per_cut():
    rb = ratio_bounds(_battery(m=[0.2, 0.6, 0.1], n=[0.1, 0.2, 0.4]), "m", "n")
    assert rb.bounded and not rb.near_unbounded
    assert rb.lo == pytest.approx(0.25) and rb.hi == pytest.approx(3.0)
    assert rb.ratio_at_identity == pytest.approx(0.9 / 0.7)


def test_ratio_unbounded_cases():
    rb = ratio_bounds_from_cuts([1.0, 1.0], [0.5, -0.5])
    assert not rb.bounded and rb.lo is None
    rb = ratio_bounds_from_cuts([1.0, 1.0], [0.5, 0.0])
    assert rb.bounded and rb.near_unbounded


def test_ratio_range_at_budget_approaches_bounds():
    bm, bn = np.array([0.2, 0.6, 0.1]), np.array([0.1, 0.2, 0.4])
    eps = default_epsilon(4, 3.0)
    lo, hi, _, _ = ratio_range_at_budget(-bm, -bn, 3.0, eps, 1.0, 2.0)
    assert lo == pytest.approx(0.25, rel=1e-4) and hi == pytest.approx(3.0, rel=1e-4)
    lo0, hi0, _, _ = ratio_range_at_budget(-bm, -bn, 3.0, eps, 0.0, 2.0)
    assert lo0 == pytest.approx(0.9 / 0.7) and hi0 == pytest.approx(0.9 / 0.7)
    with pytest.raises(ValueError):
        ratio_range_at_budget(bm, [0.1, -0.1, 0.2], 3.0, eps, 0.5, 2.0)


def test_min_cost_target_ratio():
    b = _battery(m=[0.2, 0.6, 0.1], n=[0.1, 0.2, 0.4])
    c, g = min_cost_target_ratio(b, "m", "n", 2.0)
    assert (b.b("m") @ g.w) / (b.b("n") @ g.w) == pytest.approx(2.0, rel=1e-9)
    assert 0 < c.c < 1
    with pytest.raises(ValueError):
        min_cost_target_ratio(b, "m", "n", 5.0)

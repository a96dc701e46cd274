"""P-values under relabelings, attainable p-value bounds and significance reversals."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .cost import (
    CostValue,
    GapVector,
    alpha_for,
    band_for,
    cost_from_variance,
    default_epsilon,
)
from .optimize import (
    InfeasibleError,
    bisect_budget,
    budget_radius,
    dinkelbach_max_ratio,
    max_abs_t_on_budget,
    max_radius,
    min_abs_t_on_budget,
    min_norm_with_t_floor,
    near_vertex,
    slice_center,
)
from .regression import CoefficientKernel
from .reversal import is_reversible, min_norm_on_hyperplane

DIRECTIONS = ("gain", "lose")
DEFAULT_THRESHOLDS = (0.05, 0.01, 0.001)


def p_from_t(t: float, dof: int) -> float:
    """Two-sided Student-t p-value."""
    if not np.isfinite(t):
        return 0.0
    return float(2.0 * stats.t.sf(abs(t), dof))


def t_critical(pi: float, dof: int) -> float:
    return float(stats.t.isf(pi / 2.0, dof))


def p_value(kernel: CoefficientKernel, w) -> float:
    w = w.w if isinstance(w, GapVector) else np.asarray(w, dtype=float)
    if kernel.variance(w) <= 0:
        raise ValueError("degenerate variance kernel: zero variance at this gap vector")
    return p_from_t(kernel.t(w), kernel.dof_t)


@dataclass
class Crossing:
    threshold: float
    direction: str
    min_cost: CostValue
    gaps: GapVector | None

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "direction": self.direction,
            "min_cost": self.min_cost.to_dict(),
            "gaps": None if self.gaps is None else self.gaps.w.tolist(),
        }


@dataclass
class SignificanceReport:
    focal: str
    p_identity: float
    p_min: float
    p_max: float
    crossing: Crossing | None = None
    argmin_p_gaps: np.ndarray | None = None
    argmax_p_gaps: np.ndarray | None = None
    converged: bool = True

    def to_dict(self) -> dict:
        return {
            "focal": self.focal,
            "p_identity": self.p_identity,
            "p_min": self.p_min,
            "p_max": self.p_max,
            "converged": self.converged,
            "crossing": None if self.crossing is None else self.crossing.to_dict(),
        }


def _eps(kernel, eps):
    return default_epsilon(kernel.K, kernel.L) if eps is None else float(eps)


def max_abs_t(kernel: CoefficientKernel, eps: float | None = None):
    """Largest |t| over all gap vectors.  Returns ``(t, w, converged)``.

    Dinkelbach multistart is cross-checked by the convex homogenized
    formulation; the better of the two is kept.
    """
    eps = _eps(kernel, eps)
    res = dinkelbach_max_ratio(kernel.b, kernel.V, kernel.L, eps)
    t_dk = math.sqrt(res.ratio) if np.isfinite(res.ratio) else np.inf
    t_cv, w_cv = max_abs_t_on_budget(kernel.b, kernel.V, kernel.L, eps)
    if t_cv > t_dk * (1 + 1e-10):
        return t_cv, w_cv, True
    return t_dk, res.w, res.converged


def min_abs_t(kernel: CoefficientKernel, eps: float | None = None):
    """Smallest |t| over all gap vectors.  Returns ``(t, w)``.

    Reversible focal: zero, reached on the sign boundary.  Otherwise
    b.w keeps one sign and |t| is quasiconcave on the slice, so its minimum
    sits at a vertex of the (floored) slice.
    """
    eps = _eps(kernel, eps)
    n = kernel.b.size
    if is_reversible(kernel.b):
        try:
            w = min_norm_on_hyperplane(kernel.b, kernel.L, eps).x
        except InfeasibleError:
            w = None
        if w is not None:
            return 0.0, w
    best_t, best_w = np.inf, None
    for k in range(n):
        v = near_vertex(n, k, kernel.L, eps)
        var = kernel.variance(v)
        t = np.inf if var <= 0 else abs(kernel.beta(v)) / math.sqrt(var)
        if t < best_t:
            best_t, best_w = t, v
    return best_t, best_w


def p_bounds(kernel: CoefficientKernel, eps: float | None = None):
    """Attainable ``(p_min, p_max, w_pmin, w_pmax, converged)`` over all relabelings."""
    t_hi, w_hi, conv = max_abs_t(kernel, eps)
    t_lo, w_lo = min_abs_t(kernel, eps)
    p_id = p_value(kernel, kernel.identity_gaps)
    p_min = min(p_from_t(t_hi, kernel.dof_t), p_id)
    p_max = max(p_from_t(t_lo, kernel.dof_t), p_id)
    return p_min, p_max, w_hi, w_lo, conv


def _radius(kernel, budget, alpha, eps):
    n = kernel.b.size
    return min(budget_radius(budget, kernel.K, kernel.L, alpha), max_radius(n, kernel.L, eps))


def t_range_at_budget(kernel: CoefficientKernel, budget: float, alpha: float,
                      eps: float | None = None, reversal_cost: float | None = None):
    """``(min |t|, max |t|)`` over relabelings costing at most ``budget``.

    ``reversal_cost`` (the min sign-reversal cost, if known) lets a
    reversible focal short-circuit to min |t| = 0 once the budget covers it.
    """
    eps = _eps(kernel, eps)
    r = _radius(kernel, budget, alpha, eps)
    t_hi, _ = max_abs_t_on_budget(kernel.b, kernel.V, kernel.L, eps, r)
    t_id = abs(kernel.t(kernel.identity_gaps))
    t_hi = max(t_hi, t_id)
    if reversal_cost is not None and budget >= reversal_cost:
        return 0.0, t_hi
    center = slice_center(kernel.b.size, kernel.L)
    if is_reversible(kernel.b):
        # b.w changes sign somewhere; zero is reachable iff the boundary is within r
        a = kernel.b
        w_lo = _hyperplane_reach(a, kernel.L, eps, r)
        if w_lo is not None:
            return 0.0, t_hi
    t_lo, _ = min_abs_t_on_budget(kernel.b, kernel.V, kernel.L, eps, r)
    t_lo = min(t_lo, abs(kernel.t(center)))
    return t_lo, t_hi


def _hyperplane_reach(a, L, eps, r):
    try:
        w = min_norm_on_hyperplane(a, L, eps).x
    except InfeasibleError:
        return None
    center = slice_center(a.size, L)
    return w if np.linalg.norm(w - center) <= r else None


def p_curves(kernel: CoefficientKernel, budgets, alpha: float, eps: float | None = None):
    """p_min(c) and p_max(c) on a budget grid.

    Each budget is solved independently; nesting in c is a property of the
    exact problem, not imposed on the output.
    """
    eps = _eps(kernel, eps)
    rev_cost = None
    if is_reversible(kernel.b):
        w = _hyperplane_reach(kernel.b, kernel.L, eps, np.inf)
        if w is not None:
            var = float(np.var(w))
            rev_cost = cost_from_variance(var, kernel.K, kernel.L, alpha)
    p_lo, p_hi = [], []
    for c in budgets:
        t_lo, t_hi = t_range_at_budget(kernel, float(c), alpha, eps, rev_cost)
        p_lo.append(p_from_t(t_hi, kernel.dof_t))
        p_hi.append(p_from_t(t_lo, kernel.dof_t))
    return np.asarray(p_lo), np.asarray(p_hi)


def min_cost_significance_reversal(kernel: CoefficientKernel, alpha: float | None = None,
                                   pi: float = 0.05, direction: str | None = None,
                                   eps: float | None = None, thresholds=(0.15, 0.30),
                                   tol: float = 1e-4, bounds=None) -> SignificanceReport:
    """Cheapest relabeling moving the p-value across ``pi``.

    ``direction='gain'`` pushes p down to ``pi`` (insignificant to
    significant); ``'lose'`` pushes it up.  Default: whichever applies at
    the identity labels.  Gaining is a convex problem per sign (closest gap
    vector with |t| above the critical value); losing is solved by
    bisection on the budget.  ``bounds`` may pass a precomputed
    :func:`p_bounds` result.
    """
    if not 0.0 < pi < 1.0:
        raise ValueError("pi must lie in (0, 1)")
    alpha = alpha_for(kernel.K, "fixed2") if alpha is None else alpha
    eps = _eps(kernel, eps)
    p_min, p_max, w_pmin, w_pmax, conv = p_bounds(kernel, eps) if bounds is None else bounds
    p_id = p_value(kernel, kernel.identity_gaps)
    if direction is None:
        direction = "gain" if p_id > pi else "lose"
    if direction not in DIRECTIONS:
        raise ValueError(f"direction must be one of {DIRECTIONS}")
    report = SignificanceReport(kernel.name, p_id, p_min, p_max, None, w_pmin, w_pmax, conv)

    def crossing(c, w):
        cv = CostValue(c, alpha, band_for(c, thresholds), thresholds=thresholds)
        return Crossing(pi, direction, cv, None if w is None else GapVector(w, kernel.L))

    if p_id == pi:
        report.crossing = crossing(0.0, kernel.identity_gaps)
        return report
    tau = t_critical(pi, kernel.dof_t)
    if direction == "gain":
        if not p_min < pi < p_id:
            return report
        w, d2 = min_norm_with_t_floor(kernel.b, kernel.V, kernel.L, eps, tau)
        if w is None:
            return report
        c = cost_from_variance(d2 / kernel.b.size, kernel.K, kernel.L, alpha)
        report.crossing = crossing(min(c, 1.0), w)
        return report

    if not p_id < pi < p_max:
        return report
    rev_cost = None
    if is_reversible(kernel.b):
        w = _hyperplane_reach(kernel.b, kernel.L, eps, np.inf)
        if w is not None:
            rev_cost = cost_from_variance(float(np.var(w)), kernel.K, kernel.L, alpha)
    found = {}

    def reaches(c):
        r = _radius(kernel, c, alpha, eps)
        if rev_cost is not None and c >= rev_cost:
            return True
        t_lo, w = min_abs_t_on_budget(kernel.b, kernel.V, kernel.L, eps, r)
        if t_lo <= tau:
            found[c] = w
            return True
        return False

    try:
        c = bisect_budget(reaches, 0.0, 1.0, tol)
    except InfeasibleError:
        return report
    w = found.get(c)
    if w is None and rev_cost is not None:
        w = _hyperplane_reach(kernel.b, kernel.L, eps, np.inf)
    report.crossing = crossing(c, w)
    return report


def significance_report(kernel: CoefficientKernel, alpha: float | None = None,
                        thresholds=DEFAULT_THRESHOLDS, eps: float | None = None) -> dict:
    """Crossing reports at several significance thresholds, keyed by threshold."""
    bounds = p_bounds(kernel, eps)
    return {pi: min_cost_significance_reversal(kernel, alpha, pi, eps=eps, bounds=bounds)
            for pi in thresholds}

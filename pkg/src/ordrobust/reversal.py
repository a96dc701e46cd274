"""Sign reversals, coefficient ranges and coefficient ratios under relabeling."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cost import CostValue, GapVector, alpha_for, band_for, cost, default_epsilon
from .optimize import (
    InfeasibleError,
    SimplexSliceQP,
    budget_radius,
    linear_min_on_budget,
    max_radius,
    solve_qp,
)
from .regression import DichotomizedBattery

REVERSAL_OFFSET = 1e-9


def _zero_tol(beta_d: np.ndarray) -> float:
    return 1e-12 * float(np.max(np.abs(beta_d), initial=0.0))


def sign_pattern(cut_coefficients) -> np.ndarray:
    """Signs of cut coefficients with negligible entries mapped to 0."""
    beta = np.asarray(cut_coefficients, dtype=float)
    signs = np.sign(beta)
    signs[np.abs(beta) <= _zero_tol(beta)] = 0
    return signs.astype(int)


def is_reversible(cut_coefficients) -> bool:
    signs = sign_pattern(cut_coefficients)
    return bool((signs > 0).any() and (signs < 0).any())


def check_reversibility(battery: DichotomizedBattery, focal: str) -> bool:
    return is_reversible(battery.cut_coefficients(focal))


@dataclass
class ReversalReport:
    focal: str
    reversible: bool
    beta_at_identity: float
    min_cost: CostValue | None = None
    argmin_gaps: GapVector | None = None
    kkt_residual: float | None = None
    floor_limited: bool = False

    @property
    def band(self) -> str | None:
        return None if self.min_cost is None else self.min_cost.band

    def to_dict(self) -> dict:
        return {
            "focal": self.focal,
            "reversible": self.reversible,
            "beta_at_identity": self.beta_at_identity,
            "min_cost": None if self.min_cost is None else self.min_cost.to_dict(),
            "band": self.band,
            "argmin_gaps": None if self.argmin_gaps is None else self.argmin_gaps.w.tolist(),
            "floor_limited": self.floor_limited,
        }


def _eps(battery, eps):
    return default_epsilon(battery.K, battery.L) if eps is None else float(eps)


def min_norm_on_hyperplane(a, L: float, eps: float):
    """Gaps closest to equal gaps with ``a.w = 0`` (active-set QP)."""
    n = len(a)
    problem = SimplexSliceQP(quadratic=np.eye(n), linear=np.zeros(n),
                             eq_constraints=[(np.asarray(a, float), 0.0)],
                             bound_floor=eps, range=L)
    return solve_qp(problem)


def min_cost_sign_reversal(battery: DichotomizedBattery, focal: str, alpha: float | None = None,
                           eps: float | None = None, thresholds=(0.15, 0.30)) -> ReversalReport:
    """Cheapest relabeling putting the focal coefficient on the sign boundary.

    The reported cost is the infimum over strict reversals; the boundary
    point itself is returned as the argmin.
    """
    alpha = alpha_for(battery.K, "fixed2") if alpha is None else alpha
    eps = _eps(battery, eps)
    b = battery.b(focal)
    beta_id = float(b @ battery.identity_gaps)
    if not is_reversible(-b):
        return ReversalReport(focal, False, beta_id)
    try:
        res = min_norm_on_hyperplane(b, battery.L, eps)
    except InfeasibleError:
        # mixed signs but the boundary needs gaps below the floor
        c = CostValue(1.0, alpha, band_for(1.0, thresholds), thresholds=thresholds)
        return ReversalReport(focal, True, beta_id, c, None, None, floor_limited=True)
    w = res.x
    return ReversalReport(
        focal, True, beta_id,
        min_cost=cost(w, alpha, thresholds),
        argmin_gaps=GapVector(w, battery.L),
        kkt_residual=res.kkt_residual,
    )


def strict_reversal_gaps(report: ReversalReport, battery: DichotomizedBattery, focal: str,
                         offset: float = REVERSAL_OFFSET) -> np.ndarray:
    """Nudge the boundary argmin just past the boundary so the sign strictly flips."""
    w = report.argmin_gaps.w.copy()
    b = battery.b(focal)
    direction = -np.sign(report.beta_at_identity)
    delta = offset * battery.L
    k = int(np.argmax(direction * b))  # receiver pushing beta hardest past zero
    # donor: the least helpful gap that still has room to give
    for j in np.argsort(direction * b, kind="stable"):
        if j != k and w[j] > 2 * delta and direction * (b[k] - b[j]) > 0:
            w[k] += delta
            w[j] -= delta
            break
    return w


def beta_range_at_budget(battery: DichotomizedBattery, focal: str, budget: float,
                         alpha: float | None = None, eps: float | None = None):
    """Smallest and largest focal coefficient over relabelings costing at most ``budget``.

    Returns ``(lo, hi, w_lo, w_hi)``.
    """
    if not 0.0 <= budget <= 1.0:
        raise ValueError("budget must lie in [0, 1]")
    alpha = alpha_for(battery.K, "fixed2") if alpha is None else alpha
    eps = _eps(battery, eps)
    b = battery.b(focal)
    return coefficient_range(b, battery.L, eps, budget, alpha)


def coefficient_range(b, L: float, eps: float, budget: float, alpha: float):
    b = np.asarray(b, dtype=float)
    K = b.size + 1
    r = min(budget_radius(budget, K, L, alpha), max_radius(K - 1, L, eps))
    w_lo = linear_min_on_budget(b, L, eps, r)
    w_hi = linear_min_on_budget(-b, L, eps, r)
    return float(b @ w_lo), float(b @ w_hi), w_lo, w_hi


@dataclass
class RatioBounds:
    numerator: str
    denominator: str
    bounded: bool
    per_cut_ratios: np.ndarray
    lo: float | None = None
    hi: float | None = None
    near_unbounded: bool = False
    ratio_at_identity: float | None = None
    argmin_cut: int | None = None
    argmax_cut: int | None = None

    def to_dict(self) -> dict:
        return {
            "numerator": self.numerator,
            "denominator": self.denominator,
            "bounded": self.bounded,
            "lo": self.lo,
            "hi": self.hi,
            "near_unbounded": self.near_unbounded,
            "ratio_at_identity": self.ratio_at_identity,
            "per_cut_ratios": [None if not np.isfinite(x) else float(x) for x in self.per_cut_ratios],
        }


def ratio_bounds(battery: DichotomizedBattery, numerator: str, denominator: str) -> RatioBounds:
    return ratio_bounds_from_cuts(battery.cut_coefficients(numerator),
                                  battery.cut_coefficients(denominator),
                                  battery.identity_gaps, numerator, denominator)


def ratio_bounds_from_cuts(bm, bn, identity_gaps=None, numerator="m",
                           denominator="n") -> RatioBounds:
    bm = np.asarray(bm, dtype=float)
    bn = np.asarray(bn, dtype=float)
    w0 = np.ones(bm.size) if identity_gaps is None else np.asarray(identity_gaps, float)
    den0 = bn @ w0
    rid = float(bm @ w0 / den0) if den0 != 0 else None
    nonzero = np.abs(bn) > _zero_tol(bn)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(nonzero, bm / np.where(nonzero, bn, 1.0), np.nan)
    if is_reversible(bn) or not nonzero.any():
        return RatioBounds(numerator, denominator, False, ratios, ratio_at_identity=rid)
    # a cut with zero denominator but nonzero numerator lets the ratio escape
    near = bool(np.any(~nonzero & (np.abs(bm) > _zero_tol(bm))))
    valid = np.flatnonzero(nonzero)
    lo_k = valid[np.argmin(ratios[valid])]
    hi_k = valid[np.argmax(ratios[valid])]
    return RatioBounds(numerator, denominator, True, ratios,
                       lo=float(ratios[lo_k]), hi=float(ratios[hi_k]),
                       near_unbounded=near, ratio_at_identity=rid,
                       argmin_cut=int(lo_k), argmax_cut=int(hi_k))


def min_cost_target_ratio(battery: DichotomizedBattery, numerator: str, denominator: str,
                          rho: float, alpha: float | None = None, eps: float | None = None,
                          thresholds=(0.15, 0.30)):
    """Cheapest relabeling giving beta_m / beta_n = rho.  Returns ``(CostValue, GapVector)``."""
    alpha = alpha_for(battery.K, "fixed2") if alpha is None else alpha
    eps = _eps(battery, eps)
    bounds = ratio_bounds(battery, numerator, denominator)
    if bounds.bounded and not bounds.lo < rho < bounds.hi:
        if not (bounds.lo == bounds.hi == rho):
            raise ValueError(f"target ratio {rho} outside attainable bounds ({bounds.lo}, {bounds.hi})")
    a = battery.b(numerator) - rho * battery.b(denominator)
    try:
        res = min_norm_on_hyperplane(a, battery.L, eps)
    except InfeasibleError:
        raise ValueError(f"target ratio {rho} not attainable above the gap floor") from None
    return cost(res.x, alpha, thresholds), GapVector(res.x, battery.L)


def ratio_range_at_budget(b_num, b_den, L: float, eps: float, budget: float, alpha: float,
                          tol: float = 1e-13, max_iter: int = 200):
    """Range of (b_num.w)/(b_den.w) over relabelings costing at most ``budget``.

    Needs a denominator of constant sign on the slice.  Each end is a
    linear-fractional program; Dinkelbach iterations with exact linear
    minimization over the budgeted slice converge to the global optimum.
    """
    b_num = np.asarray(b_num, dtype=float)
    b_den = np.asarray(b_den, dtype=float)
    if is_reversible(b_den):
        raise ValueError("denominator is sign-reversible; the ratio is unbounded")
    s = 1.0 if b_den.sum() >= 0 else -1.0
    num, den = s * b_num, s * b_den
    K = b_num.size + 1
    r = min(budget_radius(budget, K, L, alpha), max_radius(K - 1, L, eps))
    center = np.full(K - 1, L / (K - 1))

    def extreme(sign):
        w = center
        lam = (num @ w) / (den @ w)
        for _ in range(max_iter):
            w_new = linear_min_on_budget(sign * (num - lam * den), L, eps, r)
            val = sign * (num @ w_new - lam * (den @ w_new))
            lam_new = (num @ w_new) / (den @ w_new)
            if val >= -tol * (1 + abs(lam) * np.abs(den).max() * L):
                break
            w, lam = w_new, lam_new
        return lam, w

    lo, w_lo = extreme(1.0)
    hi, w_hi = extreme(-1.0)
    return float(lo), float(hi), w_lo, w_hi

"""Per-regression robustness audits and their aggregation into curves and meta summaries."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .cost import alpha_for, band_for, default_epsilon
from .dataset import Dataset
from .inference import (
    DEFAULT_THRESHOLDS,
    min_cost_significance_reversal,
    p_bounds,
    p_value,
)
from .optimize import ConvergenceError
from .regression import build_kernel, fit_battery
from .reversal import (
    beta_range_at_budget,
    min_cost_sign_reversal,
    ratio_bounds,
    ratio_range_at_budget,
)

log = logging.getLogger(__name__)

SCHEMA_VERSION = "1.0"
SIG_CLASSES = ((0.001, "p<=0.001"), (0.01, "p<=0.01"), (0.05, "p<=0.05"), (0.1, "p<=0.1"))
BUDGET_STEP = 0.05
CURVE_STEP = 0.01


def cost_grid(step: float) -> np.ndarray:
    n = int(round(1.0 / step))
    if not math.isclose(n * step, 1.0, rel_tol=0, abs_tol=1e-9):
        raise ValueError("grid step must divide 1")
    return np.round(np.arange(n + 1) * step, 12)


def significance_class(p: float) -> str:
    for cut, name in SIG_CLASSES:
        if p <= cut:
            return name
    return "p>0.1"


def _f(x):
    """JSON-safe float: non-finite values become None."""
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def audit_focal(battery, focal: str, se_type: str, alpha: float, eps: float,
                thresholds=DEFAULT_THRESHOLDS, budgets=None) -> dict:
    budgets = cost_grid(BUDGET_STEP) if budgets is None else budgets
    kernel = build_kernel(battery, focal, se_type)
    w0 = battery.identity_gaps
    beta = kernel.beta(w0)
    se = math.sqrt(kernel.variance(w0))
    p_id = p_value(kernel, w0)

    rev = min_cost_sign_reversal(battery, focal, alpha, eps)
    bounds = p_bounds(kernel, eps)
    p_min, p_max, _, _, converged = bounds
    crossings = {}
    for pi in thresholds:
        rep = min_cost_significance_reversal(kernel, alpha, pi, eps=eps, bounds=bounds)
        crossings[f"{pi:g}"] = None if rep.crossing is None else {
            "direction": rep.crossing.direction,
            "min_cost": _f(rep.crossing.min_cost.c),
            "band": rep.crossing.min_cost.band,
        }
    ranges = []
    for c in budgets:
        lo, hi, _, _ = beta_range_at_budget(battery, focal, float(c), alpha, eps)
        ranges.append({"c": float(c), "lo": lo, "hi": hi})
    return {
        "focal": focal,
        "beta": beta,
        "se": se,
        "p": p_id,
        "significance_class": significance_class(p_id),
        "reversible": rev.reversible,
        "min_reversal_cost": None if rev.min_cost is None else _f(rev.min_cost.c),
        "reversal_band": rev.band,
        "reversal_floor_limited": rev.floor_limited,
        "reversal_gaps": None if rev.argmin_gaps is None else rev.argmin_gaps.w.tolist(),
        "p_min": p_min,
        "p_max": p_max,
        "converged": bool(converged),
        "crossings": crossings,
        "beta_ranges": ranges,
        "kernel_b": kernel.b.tolist(),
    }


def audit_dataset(data: Dataset, config: dict | None = None, label: str | None = None) -> dict:
    """Full audit of every focal coefficient in ``data``.

    Optional config keys: ``thresholds`` (significance levels), ``budget_step``
    (grid for coefficient ranges) and ``ratios`` (list of ``[numerator,
    denominator]`` pairs).
    """
    config = config or {}
    battery = fit_battery(data)
    alpha = alpha_for(battery.K, data.alpha_policy)
    eps = data.epsilon_gap if data.epsilon_gap is not None else default_epsilon(battery.K, battery.L)
    thresholds = tuple(config.get("thresholds", DEFAULT_THRESHOLDS))
    budgets = cost_grid(config.get("budget_step", BUDGET_STEP))
    focals = list(data.design.focal_names) or [n for n in battery.names if n != "const"]
    coefficients = [audit_focal(battery, f, data.se_type, alpha, eps, thresholds, budgets)
                    for f in focals]
    ratios = []
    for num, den in config.get("ratios", []):
        rb = ratio_bounds(battery, num, den)
        entry = rb.to_dict()
        if rb.bounded:
            entry["ranges"] = []
            for c in budgets:
                lo, hi, _, _ = ratio_range_at_budget(battery.b(num), battery.b(den), battery.L,
                                                     eps, float(c), alpha)
                entry["ranges"].append({"c": float(c), "lo": lo, "hi": hi})
        ratios.append(entry)
    return {
        "schema_version": SCHEMA_VERSION,
        "label": label,
        "N": int(data.N),
        "K": int(battery.K),
        "L": float(battery.L),
        "alpha": float(alpha),
        "epsilon_gap": float(eps),
        "se_type": data.se_type,
        "estimator": data.estimator,
        "dropped_rows": int(data.dropped),
        "coefficients": coefficients,
        "ratios": ratios,
        "converged": all(c["converged"] for c in coefficients),
    }


# -- batch curves ----------------------------------------------------------------

def _share_curve(costs, n, grid):
    costs = np.sort(np.asarray([c for c in costs if c is not None], dtype=float))
    hits = np.searchsorted(costs, grid + 1e-12, side="right")
    return hits / n if n else np.zeros_like(grid)


def reversal_curves(coefficients: list[dict], step: float = CURVE_STEP):
    """Cumulative reversal-share and significance-reversal-share curves.

    A coefficient counts at budget c when its minimal sign-reversal cost
    (resp. its 5% significance-crossing cost) is at most c.  Strata: all
    coefficients plus the identity significance classes.
    """
    grid = cost_grid(step)
    strata = {"all": coefficients}
    for _, name in SIG_CLASSES + ((None, "p>0.1"),):
        strata[name] = [c for c in coefficients if c["significance_class"] == name]
    sign_rows, sig_rows = [], []
    for stratum, items in strata.items():
        n = len(items)
        sign = _share_curve([c["min_reversal_cost"] for c in items], n, grid)
        sig = _share_curve([(c["crossings"].get("0.05") or {}).get("min_cost") for c in items],
                           n, grid)
        for c, s1, s2 in zip(grid, sign, sig):
            band = band_for(float(c))
            sign_rows.append((float(c), float(s1), n, stratum, band))
            sig_rows.append((float(c), float(s2), n, stratum, band))
    return sign_rows, sig_rows


def write_curve_csv(rows, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("c,share,n,stratum,band\n")
        for c, share, n, stratum, band in rows:
            fh.write(f"{c!r},{share!r},{n},{stratum},{band}\n")


def run_batch(items, runner, threads: int = 1):
    """Run ``runner(item)`` over manifest items; order of results follows the manifest.

    Failures are logged and returned as ``None``.
    """
    def safe(item):
        try:
            return runner(item)
        except ConvergenceError:
            raise
        except Exception as exc:  # noqa: BLE001 - per-item isolation is the point
            log.error("batch item %r failed: %s", item.get("label", item), exc)
            return None

    if threads <= 1:
        return [safe(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(safe, items))


# -- meta-analysis -------------------------------------------------------------------

def _coef(audit: dict, name: str) -> dict:
    for c in audit["coefficients"]:
        if c["focal"] == name:
            return c
    raise KeyError(f"audit {audit.get('label')!r} lacks focal {name!r}")


def meta_summary(audits: list[dict], numerator: str, denominator: str) -> dict:
    """Inverse-SE weighted summaries and ratio (MRS) ranges across audits.

    Weights are 1/SE of each estimate.  Coefficient ranges at each budget are
    averaged with the same weights.  The ratio numerator/denominator is
    computed per audit from the stored cut kernels; audits whose denominator
    is sign-reversible are excluded and counted.
    """
    if not audits:
        raise ValueError("meta analysis needs at least one audit")
    out = {"numerator": numerator, "denominator": denominator, "n_audits": len(audits),
           "focals": {}}
    for name in (numerator, denominator):
        coefs = [_coef(a, name) for a in audits]
        w = np.array([1.0 / c["se"] for c in coefs])
        beta = np.array([c["beta"] for c in coefs])
        grid = [r["c"] for r in coefs[0]["beta_ranges"]]
        lo = np.array([[r["lo"] for r in c["beta_ranges"]] for c in coefs])
        hi = np.array([[r["hi"] for r in c["beta_ranges"]] for c in coefs])
        out["focals"][name] = {
            "weighted_beta": float(w @ beta / w.sum()),
            "weights": (w / w.sum()).tolist(),
            "ranges": [{"c": c, "lo": float(w @ lo[:, j] / w.sum()),
                        "hi": float(w @ hi[:, j] / w.sum())} for j, c in enumerate(grid)],
            "per_audit_ranges": [c["beta_ranges"] for c in coefs],
        }
    per_audit, excluded = [], 0
    weights = []
    for a in audits:
        cn, cd = _coef(a, numerator), _coef(a, denominator)
        if cd["reversible"]:
            excluded += 1
            per_audit.append(None)
            continue
        rows = []
        for r in cd["beta_ranges"]:
            lo, hi, _, _ = ratio_range_at_budget(cn["kernel_b"], cd["kernel_b"], a["L"],
                                                 a["epsilon_gap"], r["c"], a["alpha"])
            rows.append({"c": r["c"], "lo": lo, "hi": hi})
        per_audit.append({"identity": cn["beta"] / cd["beta"], "ranges": rows})
        weights.append(1.0 / cd["se"])
    kept = [p for p in per_audit if p is not None]
    mrs = {"excluded_reversible_denominator": excluded, "per_audit": per_audit}
    if kept:
        w = np.array(weights) / np.sum(weights)
        mrs["available"] = True
        mrs["weighted_identity"] = float(w @ [p["identity"] for p in kept])
        grid = [r["c"] for r in kept[0]["ranges"]]
        mrs["ranges"] = [{
            "c": c,
            "lo": float(w @ [p["ranges"][j]["lo"] for p in kept]),
            "hi": float(w @ [p["ranges"][j]["hi"] for p in kept]),
        } for j, c in enumerate(grid)]
    else:
        mrs["available"] = False
        mrs["reason"] = "every denominator is sign-reversible"
    out["mrs"] = mrs
    return out


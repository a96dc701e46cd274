"""Scale-use estimation from elicitation data and the discrete-vs-continuous gamma check."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import isotonic_regression

from .cost import CostValue, alpha_for, band_for, cost, default_epsilon, discretize
from .dataset import DataError, Dataset, ElicitationRecord, make_dataset
from .regression import fit_battery
from .reversal import coefficient_range

METHODS = ("linear_prompting", "objective_subjective", "sliders", "preset")
N_BOOT = 500
MAX_RETRIES = 20


@dataclass
class ScaleUseEstimate:
    method: str
    implied_labels: np.ndarray
    c: CostValue
    ci_lo: float | None = None
    ci_hi: float | None = None
    n_boot: int = 0
    monotonicity_repaired: bool = False
    interpolated: list[int] = field(default_factory=list)
    n_used: int = 0
    n_excluded: int = 0
    per_respondent: np.ndarray | None = None

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "implied_labels": [float(x) for x in self.implied_labels],
            "c": self.c.to_dict(),
            "ci_lo": self.ci_lo,
            "ci_hi": self.ci_hi,
            "n_boot": self.n_boot,
            "monotonicity_repaired": self.monotonicity_repaired,
            "interpolated": list(self.interpolated),
            "n_used": self.n_used,
            "n_excluded": self.n_excluded,
        }


# -- helpers ------------------------------------------------------------------------

def pav(values, weights=None):
    """Isotonic (nondecreasing) fit; returns ``(fitted, repaired_flag)``."""
    y = np.asarray(values, dtype=float)
    if y.size < 2 or np.all(np.diff(y) >= 0):
        return y.copy(), False
    fit = isotonic_regression(y, weights=weights).x
    return np.asarray(fit), True


def rescale(labels, l1: float, lK: float) -> np.ndarray:
    """Affine map sending the first/last entries to ``l1``/``lK``."""
    x = np.asarray(labels, dtype=float)
    span = x[-1] - x[0]
    if span <= 0:
        raise ValueError("implied labels have zero range")
    return l1 + (x - x[0]) * (lK - l1) / span


def _label_cost(labels, alpha) -> CostValue:
    return cost(np.diff(_strict(labels)), alpha)


def _cost_value(labels, alpha) -> float:
    return _label_cost(labels, alpha).c


def _strict(labels):
    """Break exact ties left by isotonic pooling so the gap vector is positive."""
    labels = np.asarray(labels, dtype=float)
    gaps = np.diff(labels)
    if np.all(gaps > 0):
        return labels
    floor = 1e-12 * (labels[-1] - labels[0])
    gaps = np.maximum(gaps, floor)
    gaps *= (labels[-1] - labels[0]) / gaps.sum()
    return np.concatenate([[labels[0]], labels[0] + np.cumsum(gaps)])


def bootstrap_ci(estimator, data, n_boot: int = N_BOOT, seed: int = 0,
                 level: float = 0.95, max_retries: int = MAX_RETRIES):
    """Percentile bootstrap interval for a scalar statistic.

    ``data`` is a sequence of groups (arrays indexed along axis 0); each group
    is resampled with replacement independently, as for separate survey arms.
    Replicate ``b`` draws from its own stream spawned from ``seed``, so the
    result does not depend on evaluation order.  A replicate on which the
    estimator raises is redrawn from the same stream, up to ``max_retries``
    times.  Returns ``(lo, hi, replicates)``.
    """
    if n_boot < 2:
        raise ValueError("n_boot must be at least 2")
    groups = [np.asarray(g) for g in data]
    streams = np.random.SeedSequence(seed).spawn(n_boot)
    reps = np.empty(n_boot)
    for b, ss in enumerate(streams):
        rng = np.random.default_rng(ss)
        for attempt in range(max_retries + 1):
            sample = [g[rng.integers(0, len(g), len(g))] for g in groups]
            try:
                reps[b] = estimator(*sample)
                break
            except (ValueError, DataError, FloatingPointError):
                if attempt == max_retries:
                    raise
    tail = 100.0 * (1.0 - level) / 2.0
    lo, hi = np.percentile(reps, [tail, 100.0 - tail])
    return float(lo), float(hi), reps


# -- linear prompting (quantile matching) --------------------------------------------

def _quantile_labels(disc, cont, labels):
    """Implied labels from matching the two arms' CDFs, plus interpolated categories."""
    K = labels.size
    disc = np.asarray(disc, dtype=int)
    cont = np.asarray(cont, dtype=float)
    counts = np.bincount(disc, minlength=K)[:K]
    F = np.cumsum(counts)[:-1] / disc.size
    r = np.quantile(cont, F, method="linear")
    interpolated = [k for k in range(K - 1) if counts[k] == 0]
    if interpolated:
        # an empty category has no matched quantile of its own
        known = np.array([k for k in range(K - 1) if counts[k] > 0])
        if known.size == 0:
            raise ValueError("no category carries mass below the top")
        grid = np.arange(K - 1)
        r = np.interp(grid, known, r[known])
    raw = np.append(r, labels[-1])
    return raw, interpolated


def quantile_match(unprompted_discrete, prompted_continuous, labels, alpha: float | None = None,
                   n_boot: int = N_BOOT, seed: int = 0) -> ScaleUseEstimate:
    """Linear-prompting estimator.

    ``unprompted_discrete`` holds category indices 0..K-1 from the unprompted
    arm; ``prompted_continuous`` holds the linearly prompted arm's answers on
    ``[l_1, l_K]``.  The label of category k is the continuous-arm quantile at
    the unprompted arm's cumulative share ``P(r <= k)``; the top label is
    ``l_K``.  The vector is repaired to be nondecreasing and mapped onto
    ``[l_1, l_K]``.
    """
    labels = np.asarray(labels, dtype=float)
    K = labels.size
    alpha = alpha_for(K, "fixed2") if alpha is None else alpha
    disc = np.asarray(unprompted_discrete, dtype=int)
    cont = np.asarray(prompted_continuous, dtype=float)
    if disc.size == 0 or cont.size == 0:
        raise DataError("both arms need observations")
    if disc.min() < 0 or disc.max() > K - 1:
        raise DataError("discrete responses must lie in 0..K-1")
    if cont.min() < labels[0] or cont.max() > labels[-1]:
        raise DataError("continuous responses outside the label range")

    def point(d, x):
        raw, interp = _quantile_labels(d, x, labels)
        fixed, repaired = pav(raw)
        return rescale(fixed, labels[0], labels[-1]), interp, repaired

    implied, interp, repaired = point(disc, cont)
    est = ScaleUseEstimate("linear_prompting", implied, _label_cost(implied, alpha),
                           monotonicity_repaired=repaired, interpolated=interp,
                           n_used=disc.size + cont.size)
    if n_boot:
        lo, hi, _ = bootstrap_ci(lambda d, x: _cost_value(point(d, x)[0], alpha),
                                 (disc, cont), n_boot, seed)
        est.ci_lo, est.ci_hi, est.n_boot = lo, hi, n_boot
    return est



# -- objective-subjective ----------------------------------------------------------

def objective_subjective(categories, objective_values, labels, alpha: float | None = None,
                         n_boot: int = N_BOOT, seed: int = 0) -> ScaleUseEstimate:
    """Mean objective value per subjective category, repaired and rescaled.

    Categories absent from the sample get no label of their own; their
    labels are interpolated linearly in the category index and reported.
    """
    labels = np.asarray(labels, dtype=float)
    K = labels.size
    alpha = alpha_for(K, "fixed2") if alpha is None else alpha
    cat = np.asarray(categories, dtype=int)
    obj = np.asarray(objective_values, dtype=float)
    if cat.size != obj.size:
        raise DataError("categories and objective values differ in length")
    if np.unique(cat).size < 2:
        raise DataError("need at least two distinct categories")

    def point(c, o):
        counts = np.bincount(c, minlength=K)[:K]
        if (counts > 0).sum() < 2:
            raise ValueError("fewer than two categories in sample")
        sums = np.bincount(c, weights=o, minlength=K)[:K]
        present = np.flatnonzero(counts)
        means = sums[present] / counts[present]
        fitted, repaired = pav(means, counts[present])
        full = np.interp(np.arange(K), present, fitted)
        interp = [int(k) for k in range(K) if counts[k] == 0]
        return rescale(full, labels[0], labels[-1]), interp, repaired

    implied, interp, repaired = point(cat, obj)
    est = ScaleUseEstimate("objective_subjective", implied, _label_cost(implied, alpha),
                           monotonicity_repaired=repaired, interpolated=interp, n_used=cat.size)
    if n_boot:
        pairs = np.column_stack([cat, obj])
        lo, hi, _ = bootstrap_ci(
            lambda p: _cost_value(point(p[:, 0].astype(int), p[:, 1])[0], alpha),
            (pairs,), n_boot, seed)
        est.ci_lo, est.ci_hi, est.n_boot = lo, hi, n_boot
    return est


# -- sliders ------------------------------------------------------------------------

def slider_cost(slider_positions, labels, alpha: float | None = None, n_boot: int = N_BOOT,
                seed: int = 0) -> ScaleUseEstimate:
    """Per-respondent costs of self-placed label positions, averaged.

    Each respondent's vector is repaired, mapped onto ``[l_1, l_K]`` and
    costed.  Respondents whose repaired vector has zero range are excluded
    and counted.  The implied labels reported are the mean of the repaired
    vectors; the headline cost is the mean respondent cost.
    """
    labels = np.asarray(labels, dtype=float)
    K = labels.size
    alpha = alpha_for(K, "fixed2") if alpha is None else alpha
    S = np.atleast_2d(np.asarray(slider_positions, dtype=float))
    if S.shape[1] != K:
        raise DataError(f"slider vectors need {K} positions, got {S.shape[1]}")
    if S.min() < labels[0] or S.max() > labels[-1]:
        raise DataError("slider positions outside the label range")
    costs, vectors = [], []
    repaired_any = False
    excluded = 0
    for row in S:
        fixed, repaired = pav(row)
        if fixed[-1] - fixed[0] <= 0:
            excluded += 1
            continue
        repaired_any |= repaired
        lab = rescale(fixed, labels[0], labels[-1])
        vectors.append(lab)
        costs.append(_cost_value(lab, alpha))
    if not costs:
        raise DataError("every slider vector has zero range")
    costs = np.asarray(costs)
    mean_c = float(costs.mean())
    implied = np.mean(vectors, axis=0)
    est = ScaleUseEstimate("sliders", implied, CostValue(mean_c, alpha, band_for(mean_c)),
                           monotonicity_repaired=repaired_any, n_used=costs.size,
                           n_excluded=excluded, per_respondent=costs)
    if n_boot:
        lo, hi, _ = bootstrap_ci(lambda c: float(c.mean()), (costs,), n_boot, seed)
        est.ci_lo, est.ci_hi, est.n_boot = lo, hi, n_boot
    return est


def estimate_from_records(records: list[ElicitationRecord], labels, method: str,
                          alpha: float | None = None, n_boot: int = N_BOOT,
                          seed: int = 0) -> ScaleUseEstimate:
    """Dispatch a method over loaded elicitation records."""
    labels = np.asarray(labels, dtype=float)
    if method == "linear_prompting":
        disc = [r.discrete_response for r in records
                if r.arm == "unprompted" and r.discrete_response is not None]
        cont = [r.continuous_response for r in records
                if r.arm == "linear_prompted" and r.continuous_response is not None]
        return quantile_match(disc, cont, labels, alpha, n_boot, seed)
    if method == "objective_subjective":
        rows = [(r.discrete_response, r.objective_value) for r in records
                if r.discrete_response is not None and r.objective_value is not None]
        if not rows:
            raise DataError("no records with both a category and an objective value")
        cat, obj = zip(*rows)
        return objective_subjective(cat, obj, labels, alpha, n_boot, seed)
    if method == "sliders":
        S = [r.slider_positions for r in records if r.slider_positions is not None]
        if not S:
            raise DataError("no slider records")
        return slider_cost(np.vstack(S), labels, alpha, n_boot, seed)
    raise ValueError(f"unknown method {method!r}")


# -- gamma: continuous vs discrete outcomes ----------------------------------------------

@dataclass
class GammaReport:
    names: list[str]
    beta_cont: np.ndarray
    beta_disc: np.ndarray
    gamma: np.ndarray
    se_gamma: np.ndarray
    assumption2_flag: np.ndarray
    n_boot: int

    def to_dict(self) -> dict:
        return {
            name: {
                "beta_cont": float(self.beta_cont[i]),
                "beta_disc": float(self.beta_disc[i]),
                "gamma": float(self.gamma[i]),
                "se_gamma": float(self.se_gamma[i]),
                "assumption2_flag": bool(self.assumption2_flag[i]),
            }
            for i, name in enumerate(self.names)
        }


def _coef_fn(data: Dataset):
    """Coefficient map y -> beta for the dataset's estimator, on a row subset."""
    design = data.design
    X, Z, units = design.X, design.Z, design.unit_ids
    estimator = data.estimator

    def coef(idx, Y):
        Xs, Ys = X[idx], Y[idx]
        if estimator == "fe":
            u = units[idx]
            keep = np.array([n != "const" for n in design.names])
            Xs = Xs[:, keep]
            Xs = _demean_rows(Xs, u)
            Ys = _demean_rows(Ys, u)
            return np.linalg.lstsq(Xs, Ys, rcond=None)[0]
        if estimator == "tsls":
            Zs = Z[idx]
            return np.linalg.solve(Zs.T @ Xs, Zs.T @ Ys)
        return np.linalg.lstsq(Xs, Ys, rcond=None)[0]

    names = [n for n in design.names if not (estimator == "fe" and n == "const")]
    return coef, names


def _demean_rows(A, groups):
    _, inv = np.unique(groups, return_inverse=True)
    A2 = A.reshape(A.shape[0], -1)
    sums = np.zeros((inv.max() + 1, A2.shape[1]))
    np.add.at(sums, inv, A2)
    means = sums / np.bincount(inv)[:, None]
    return (A2 - means[inv]).reshape(A.shape)


def gamma_analysis(data: Dataset, continuous, n_boot: int = N_BOOT, seed: int = 0,
                   z: float = 1.96) -> GammaReport:
    """gamma = beta_cont - beta_disc per covariate, with a paired row bootstrap SE.

    The discrete outcome is the dataset's label values.  Rows are resampled
    jointly so both regressions see the same sample.
    """
    y_disc = data.outcome.values
    y_cont = np.asarray(continuous, dtype=float)
    if y_cont.shape != y_disc.shape:
        raise DataError("continuous outcome must align with the dataset rows")
    coef, names = _coef_fn(data)
    Y = np.column_stack([y_cont, y_disc])
    full = np.arange(data.N)
    B = coef(full, Y)
    beta_cont, beta_disc = B[:, 0], B[:, 1]
    gamma = beta_cont - beta_disc
    streams = np.random.SeedSequence(seed).spawn(n_boot)
    reps = np.empty((n_boot, len(names)))
    diff = (y_cont - y_disc)[:, None]
    for b, ss in enumerate(streams):
        rng = np.random.default_rng(ss)
        for attempt in range(MAX_RETRIES + 1):
            idx = rng.integers(0, data.N, data.N)
            try:
                est = coef(idx, diff)[:, 0]
            except np.linalg.LinAlgError:
                if attempt == MAX_RETRIES:
                    raise
                continue
            if np.all(np.isfinite(est)):
                break
        reps[b] = est
    se = reps.std(axis=0, ddof=1)
    flag = (np.sign(beta_cont) != np.sign(beta_disc)) & (np.abs(gamma) > z * se)
    return GammaReport(names, beta_cont, beta_disc, gamma, se, flag, n_boot)


def worst_case_gamma(data: Dataset, continuous, focal: str, cost_grid, n_levels: int = 101,
                     alpha_policy: str = "log10"):
    """Coefficient ranges for the discrete and the (discretized) continuous outcome.

    The continuous outcome is rounded onto ``n_levels`` equidistant labels
    over the discrete scale's range.  Each measure uses its own category
    count in the cost exponent.  Returns a list of dicts per budget with
    both ranges and the gamma extremes (difference of matching ends).
    """
    labels = data.outcome.labels
    l1, L = labels[0], labels[-1] - labels[0]
    cont = np.asarray(continuous, dtype=float)
    fine = discretize(cont - l1, n_levels, L)
    d = data.design
    cont_data = make_dataset(
        fine.codes, d.X[:, 1:] if d.intercept_present else d.X,
        [n for n in d.names if n != "const"] if d.intercept_present else d.names,
        labels=fine.labels + l1, intercept=d.intercept_present, unit_ids=d.unit_ids,
        cluster_ids=d.cluster_ids, instruments=d.instruments, focal=[focal])
    out = []
    measures = []
    for key, bat in (("disc", fit_battery(data)), ("cont", fit_battery(cont_data))):
        measures.append((key, bat, alpha_for(bat.K, alpha_policy), default_epsilon(bat.K, bat.L)))
    for c in cost_grid:
        row = {"c": float(c)}
        for key, bat, alpha, eps in measures:
            lo, hi, _, _ = coefficient_range(bat.b(focal), bat.L, eps, float(c), alpha)
            row[f"{key}_lo"], row[f"{key}_hi"] = lo, hi
        row["gamma_lo"] = row["cont_lo"] - row["disc_lo"]
        row["gamma_hi"] = row["cont_hi"] - row["disc_hi"]
        out.append(row)
    return out

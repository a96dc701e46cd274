"""Synthetic generators with known ground truth.

All randomness flows from one integer seed per call.  The reporting-shape
presets (concave, convex, logistic, inverse logistic) are this package's own
parameterizations, each tuned by root finding to a requested cost.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit, logit

from .cost import alpha_for, cost
from .dataset import DataError, Dataset, ElicitationRecord, make_dataset

PRESETS = ("linear", "convex", "concave", "logistic", "inverse_logistic")


# -- reporting-shape presets ---------------------------------------------------------

def _shape(kind: str, theta: float, x: np.ndarray) -> np.ndarray:
    if kind == "linear":
        return x
    if kind == "convex":
        return x ** theta
    if kind == "concave":
        return 1.0 - (1.0 - x) ** theta
    lo, hi = expit(-theta / 2), expit(theta / 2)
    if kind == "logistic":
        return (expit(theta * (x - 0.5)) - lo) / (hi - lo)
    if kind == "inverse_logistic":
        y = np.clip(lo + x * (hi - lo), 1e-300, 1 - 1e-16)
        out = 0.5 + logit(y) / theta
        return (out - out[0]) / (out[-1] - out[0])
    raise ValueError(f"unknown preset {kind!r}; choose from {PRESETS}")


_RANGES = {"convex": (1.0, 50.0), "concave": (1.0, 50.0),
           "logistic": (1e-6, 200.0), "inverse_logistic": (1e-6, 200.0)}


def preset_labels(kind: str, K: int, target_c: float, l1: float = 0.0, L: float | None = None,
                  alpha: float = 2.0) -> np.ndarray:
    """Labels of a named reporting shape whose cost equals ``target_c``."""
    if kind not in PRESETS:
        raise ValueError(f"unknown preset {kind!r}; choose from {PRESETS}")
    L = float(K - 1) if L is None else float(L)
    x = np.linspace(0.0, 1.0, K)
    if kind == "linear" or target_c == 0:
        if target_c != 0:
            raise ValueError("the linear preset has cost 0")
        return l1 + L * x
    lo, hi = _RANGES[kind]

    def gap(theta):
        return cost(np.diff(_shape(kind, theta, x)) * L, alpha).c - target_c

    if gap(hi) < 0:
        raise ValueError(f"{kind} preset cannot reach cost {target_c} at K={K}")
    theta = brentq(gap, lo, hi, xtol=1e-14)
    return l1 + L * _shape(kind, theta, x)


# -- regression data --------------------------------------------------------------------

@dataclass
class GeneratorSpec:
    """Latent-state population and reporting function.

    ``beta`` starts with the intercept.  The latent state is
    ``s = X beta + noise * exp(X scale_coefs) * e`` on the label scale, so
    ``scale_coefs`` plants effects that differ across the distribution.
    """

    n: int
    labels: np.ndarray
    beta: np.ndarray
    noise: float = 1.0
    scale_coefs: np.ndarray | None = None
    covariate_sd: float = 1.0
    seed: int = 0
    latent_shape: tuple[float, float] = (1.0, 1.0)
    objective_noise: float = 0.25
    slider_noise: float | None = None
    names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=float)
        self.beta = np.asarray(self.beta, dtype=float)
        if self.labels.size < 2 or np.any(np.diff(self.labels) <= 0):
            raise ValueError("reporting labels must be strictly increasing")
        if not self.names:
            self.names = [f"x{j}" for j in range(1, self.beta.size)]

    @property
    def K(self) -> int:
        return self.labels.size

    @property
    def L(self) -> float:
        return float(self.labels[-1] - self.labels[0])

    def true_cost(self, alpha: float | None = None) -> float:
        alpha = alpha_for(self.K, "fixed2") if alpha is None else alpha
        return cost(np.diff(self.labels), alpha).c


def midpoint_categories(s, labels) -> np.ndarray:
    """Category codes 1..K by thresholding at label midpoints; ties go up."""
    mids = 0.5 * (labels[:-1] + labels[1:])
    return np.searchsorted(mids, s, side="right") + 1


def generate_regression_data(spec: GeneratorSpec, se_type: str = "homoskedastic"):
    """Draw a dataset.  Returns ``(Dataset, truth)``.

    The outcome carries the default labels 1..K; the reporting labels only
    shape how latent states fall into categories.
    """
    rng = np.random.default_rng(spec.seed)
    M = spec.beta.size - 1
    X = rng.normal(0.0, spec.covariate_sd, size=(spec.n, M))
    scale = spec.noise * np.ones(spec.n)
    if spec.scale_coefs is not None:
        scale = scale * np.exp(X @ np.asarray(spec.scale_coefs, float))
    s = spec.beta[0] + X @ spec.beta[1:] + scale * rng.standard_normal(spec.n)
    codes = midpoint_categories(s, spec.labels)
    if np.unique(codes).size < 2:
        raise DataError("degenerate generator: every draw lands in one category")
    data = make_dataset(codes, X, spec.names, labels=np.arange(1, spec.K + 1, dtype=float),
                        focal=list(spec.names), se_type=se_type)
    truth = {
        "beta": spec.beta.tolist(),
        "cost": spec.true_cost(),
        "thresholds": (0.5 * (spec.labels[:-1] + spec.labels[1:])).tolist(),
        "latent": s,
    }
    return data, truth


# -- elicitation -------------------------------------------------------------------------

def boundary_thresholds(labels) -> np.ndarray:
    """Category upper bounds whose CDF matching returns ``labels`` exactly.

    Quantile matching reads the continuous quantile at each category's upper
    cumulative share as that category's label, with ``l_K`` on top, and then
    rescales.  Bins of widths proportional to ``(mean gap, w_1, ..., w_{K-1})``
    make that construction reproduce the labels.
    """
    labels = np.asarray(labels, dtype=float)
    K = labels.size
    L = labels[-1] - labels[0]
    s = L / (L + L / (K - 1))
    return labels[-1] - s * (labels[-1] - labels[:-1])


def _latent(spec: GeneratorSpec, rng, n):
    a, b = spec.latent_shape
    return spec.labels[0] + spec.L * rng.beta(a, b, size=n)


def generate_elicitation(spec: GeneratorSpec, method: str):
    """Elicitation records for one method plus the generator's true cost.

    ``linear_prompting``: two arms of ``spec.n`` each sharing the latent
    distribution; the prompted arm reports the latent state linearly, the
    unprompted arm reports the category containing it.
    ``objective_subjective``: one arm; the objective measure is linear in the
    reported category's label plus noise.
    ``sliders``: each respondent places the labels with noise.
    """
    rng = np.random.default_rng(spec.seed)
    labels = spec.labels
    K = spec.K
    records: list[ElicitationRecord] = []
    if method == "linear_prompting":
        thresholds = boundary_thresholds(labels)
        u_un = _latent(spec, rng, spec.n)
        u_lin = _latent(spec, rng, spec.n)
        cats = np.minimum(np.searchsorted(thresholds, u_un, side="left"), K - 1)
        records += [ElicitationRecord("unprompted", discrete_response=int(k)) for k in cats]
        records += [ElicitationRecord("linear_prompted", continuous_response=float(x))
                    for x in u_lin]
    elif method == "objective_subjective":
        u = _latent(spec, rng, spec.n)
        cats = midpoint_categories(u, labels) - 1
        obj = labels[cats] + spec.objective_noise * spec.L / (K - 1) * rng.standard_normal(spec.n)
        records += [ElicitationRecord("unprompted", discrete_response=int(k), objective_value=float(o))
                    for k, o in zip(cats, obj)]
    elif method == "sliders":
        sd = 0.005 * spec.L if spec.slider_noise is None else spec.slider_noise
        S = labels + sd * rng.standard_normal((spec.n, K))
        S = np.clip(S, labels[0], labels[-1])
        records += [ElicitationRecord("unprompted", slider_positions=row) for row in S]
    else:
        raise ValueError(f"unknown elicitation method {method!r}")
    return records, {"cost": spec.true_cost(), "labels": labels.tolist()}


def generate_gamma_data(n: int, K: int = 11, beta=(5.0, 0.8, -0.5), noise: float = 1.5,
                        cont_noise: float = 0.5, planted=None, seed: int = 0,
                        base: str = "discrete"):
    """Discrete and continuous answers from the same latent state.

    The discrete outcome rounds the latent state to labels 0..K-1.  The
    continuous outcome is ``base`` (the discrete label, or the latent state
    itself) plus independent noise and ``planted @ x`` if given, clipped to
    the scale.  Returns ``(Dataset, continuous)``.
    """
    if base not in ("discrete", "latent"):
        raise ValueError("base must be 'discrete' or 'latent'")
    rng = np.random.default_rng(seed)
    beta = np.asarray(beta, dtype=float)
    M = beta.size - 1
    X = rng.normal(size=(n, M))
    s = beta[0] + X @ beta[1:] + noise * rng.standard_normal(n)
    s = np.clip(s, 0.0, K - 1.0)
    labels = np.arange(K, dtype=float)
    codes = midpoint_categories(s, labels)
    cont = (labels[codes - 1] if base == "discrete" else s) + cont_noise * rng.standard_normal(n)
    if planted is not None:
        cont = cont + X @ np.asarray(planted, dtype=float)
    cont = np.clip(cont, 0.0, K - 1.0)
    names = [f"x{j}" for j in range(1, M + 1)]
    data = make_dataset(codes, X, names, labels=labels, focal=names)
    return data, cont


def generate_studies(n_studies: int, effects: dict, n: int = 800, K: int = 11,
                     noise: float = 1.5, seed: int = 0) -> list[Dataset]:
    """Several independent studies sharing common latent effects.

    Outcome labels are standardized within each study (mean 0, sd 1), as a
    meta-analysis across differently scaled studies requires.
    """
    names = list(effects)
    beta = np.array([(K - 1) / 2] + [effects[k] for k in names])
    out = []
    streams = np.random.SeedSequence(seed).spawn(n_studies)
    for ss in streams:
        rng = np.random.default_rng(ss)
        X = rng.normal(size=(n, len(names)))
        s = X @ beta[1:] + beta[0] + noise * rng.standard_normal(n)
        codes = midpoint_categories(s, np.arange(K, dtype=float))
        raw = np.arange(K, dtype=float)
        vals = raw[codes - 1]
        labels = (raw - vals.mean()) / vals.std()
        out.append(make_dataset(codes, X, names, labels=labels, focal=names))
    return out

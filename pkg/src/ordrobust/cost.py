"""Non-linearity cost of a relabeling of an ordered response scale.

A relabeling is represented by its gap vector ``w`` (successive differences
of the transformed labels).  The cost is the variance of the gaps divided by
the largest variance any strictly increasing relabeling of the same range can
reach, raised to ``1/alpha``: 0 for equal gaps, 1 in the single-jump limit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PLAUSIBLE = 0.15
MARGINAL = 0.30

ALPHA_POLICIES = ("fixed2", "log10")


@dataclass(frozen=True)
class GapVector:
    """Strictly positive gaps that sum to the scale range ``L``."""

    w: np.ndarray
    L: float

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        if w.ndim != 1 or w.size < 1:
            raise ValueError("gap vector must be one-dimensional and non-empty")
        if np.any(w <= 0):
            raise ValueError("gaps must be strictly positive")
        if not np.isclose(w.sum(), self.L, rtol=1e-9, atol=1e-12):
            raise ValueError(f"gaps sum to {w.sum()!r}, expected range {self.L!r}")
        object.__setattr__(self, "w", w)

    @property
    def K(self) -> int:
        return self.w.size + 1

    @classmethod
    def from_labels(cls, labels) -> "GapVector":
        labels = np.asarray(labels, dtype=float)
        return cls(np.diff(labels), float(labels[-1] - labels[0]))

    def labels(self, l1: float = 0.0) -> np.ndarray:
        return labels_from_gaps(self.w, l1)


@dataclass(frozen=True)
class CostValue:
    c: float
    alpha: float
    band: str
    degenerate: bool = False
    thresholds: tuple[float, float] = field(default=(PLAUSIBLE, MARGINAL), repr=False)

    def to_dict(self) -> dict:
        return {"c": self.c, "alpha": self.alpha, "band": self.band,
                "degenerate": self.degenerate}


def band_for(c: float, thresholds: tuple[float, float] = (PLAUSIBLE, MARGINAL)) -> str:
    lo, hi = thresholds
    if c <= lo:
        return "plausible"
    if c <= hi:
        return "marginal"
    return "implausible"


def max_var(K: int, L: float) -> float:
    """Largest population variance of ``K - 1`` positive gaps summing to ``L``.

    Attained in the limit where one gap takes the whole range.
    """
    if K < 2:
        raise ValueError("need at least two categories")
    n = K - 1
    return (n - 1) * L**2 / n**2


def gap_variance(w) -> float:
    w = np.asarray(w, dtype=float)
    return float(np.mean((w - w.mean()) ** 2))


def alpha_for(K: int, policy: str = "fixed2") -> float:
    if policy == "fixed2":
        return 2.0
    if policy == "log10":
        if K < 3:
            raise ValueError("log10 alpha policy needs K >= 3 (log10(K-1) must be positive)")
        return 2.0 * np.log10(K - 1)
    raise ValueError(f"unknown alpha policy {policy!r}; expected one of {ALPHA_POLICIES}")


def cost_from_variance(var, K: int, L: float, alpha: float):
    """Cost of a gap variance; accepts a scalar or an array of variances."""
    mv = max_var(K, L)
    var = np.asarray(var, dtype=float)
    if mv <= 0:
        out = np.zeros_like(var)
    else:
        out = np.clip(var / mv, 0.0, 1.0) ** (1.0 / alpha)
    return float(out) if out.ndim == 0 else out


def variance_budget(c: float, K: int, L: float, alpha: float) -> float:
    """Gap variance allowed by a cost budget ``c``."""
    return max_var(K, L) * float(c) ** alpha


def cost(w, alpha: float = 2.0, thresholds: tuple[float, float] = (PLAUSIBLE, MARGINAL)) -> CostValue:
    if isinstance(w, GapVector):
        w, L = w.w, w.L
    else:
        w = np.asarray(w, dtype=float)
        L = float(w.sum())
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    K = w.size + 1
    if K == 2:
        return CostValue(0.0, alpha, band_for(0.0, thresholds), degenerate=True, thresholds=thresholds)
    c = cost_from_variance(gap_variance(w), K, L, alpha)
    return CostValue(c, alpha, band_for(c, thresholds), thresholds=thresholds)


def variance_form(K: int) -> np.ndarray:
    """Positive semidefinite ``P`` with ``gap_variance(w) == w @ P @ w``."""
    n = K - 1
    return (np.eye(n) - np.full((n, n), 1.0 / n)) / n


def labels_from_gaps(w, l1: float = 0.0) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    return l1 + np.concatenate([[0.0], np.cumsum(w)])


def equal_gaps(K: int, L: float) -> np.ndarray:
    return np.full(K - 1, L / (K - 1))


def default_epsilon(K: int, L: float) -> float:
    return 1e-6 * L / (K - 1)


def discretize(values, n_labels: int, L: float):
    """Round values on ``[0, L]`` to ``n_labels`` equidistant labels.

    Ties round half away from zero.  Returns an ``OrdinalOutcome`` with codes
    ``1..n_labels`` and labels ``0, L/(n-1), ..., L``.
    """
    from .dataset import OrdinalOutcome

    if n_labels < 2:
        raise ValueError("n_labels must be at least 2")
    x = np.asarray(values, dtype=float)
    if np.any(x < -1e-12) or np.any(x > L + 1e-12):
        raise ValueError("values must lie in [0, L]")
    step = L / (n_labels - 1)
    # small slack so values printed as exact halves (e.g. 0.35 / 0.1) tie upward
    idx = np.floor(x / step + 0.5 + 1e-9).astype(int)
    idx = np.clip(idx, 0, n_labels - 1)
    labels = step * np.arange(n_labels)
    return OrdinalOutcome(codes=idx + 1, labels=labels)

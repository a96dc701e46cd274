"""Dichotomized regression battery and variance kernels.

Regressing each cut indicator ``d_k = 1(r <= k)`` on the design once is
enough to express the coefficient, residuals and sandwich variance of the
regression of *any* monotone relabeling of the outcome: with gaps ``w``,

    beta_m(w) = b . w           (b_k = -beta_km^(d))
    resid(w)  = -E w            (E = cut residual matrix)
    Var_m(w)  = w' V w

so every downstream optimization works with ``(b, V)`` only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .dataset import INTERCEPT, DataError, Dataset

SMALL_SAMPLE_POLICIES = ("default", "none")


@dataclass(frozen=True)
class DichotomizedBattery:
    names: list[str]
    labels: np.ndarray
    beta_d: np.ndarray        # (K-1) x M
    resid_d: np.ndarray       # N x (K-1)
    xtx_inv: np.ndarray       # bread, M x M
    scores: np.ndarray        # N x M; x_i (OLS), demeaned x_i (FE), z_i (2SLS)
    estimator: str
    dof_resid: int
    cluster_ids: np.ndarray | None = None
    cluster_sums: np.ndarray | None = None   # G x M x (K-1)
    cut_groups: np.ndarray = field(default=None)  # representative cut per cut
    constant_cuts: np.ndarray = field(default=None)
    n_units: int = 0
    design: np.ndarray = field(default=None, repr=False)  # regressors as used (FE: demeaned)
    unit_ids: np.ndarray | None = None

    @property
    def cut_count(self) -> int:
        return self.beta_d.shape[0]

    @property
    def K(self) -> int:
        return self.cut_count + 1

    @property
    def L(self) -> float:
        return float(self.labels[-1] - self.labels[0])

    @property
    def N(self) -> int:
        return self.resid_d.shape[0]

    @property
    def M(self) -> int:
        return self.beta_d.shape[1]

    @property
    def identity_gaps(self) -> np.ndarray:
        return np.diff(self.labels)

    def index(self, focal: str) -> int:
        try:
            j = self.names.index(focal)
        except ValueError:
            raise KeyError(f"unknown focal coefficient {focal!r}") from None
        if focal == INTERCEPT:
            raise KeyError("the intercept does not decompose over cuts")
        return j

    def cut_coefficients(self, focal: str) -> np.ndarray:
        """beta_km^(d) for k = 1..K-1."""
        return self.beta_d[:, self.index(focal)].copy()

    def b(self, focal: str) -> np.ndarray:
        return -self.beta_d[:, self.index(focal)]

    @classmethod
    def from_cut_coefficients(cls, cut_coefficients: dict, labels=None) -> "DichotomizedBattery":
        """Battery carrying only given cut coefficients (no residuals).

        Enough for sign, range and ratio analyses; variance kernels need a
        fitted battery.
        """
        names = [INTERCEPT] + list(cut_coefficients)
        cols = [np.asarray(v, dtype=float) for v in cut_coefficients.values()]
        n_cuts = cols[0].size
        beta_d = np.column_stack([np.zeros(n_cuts)] + cols)
        if labels is None:
            labels = np.arange(1, n_cuts + 2, dtype=float)
        M = len(names)
        return cls(names=names, labels=np.asarray(labels, dtype=float), beta_d=beta_d,
                   resid_d=np.zeros((0, n_cuts)), xtx_inv=np.eye(M), scores=np.zeros((0, M)),
                   estimator="ols", dof_resid=1, cut_groups=np.arange(n_cuts),
                   constant_cuts=np.zeros(n_cuts, bool), design=np.zeros((0, M)))

    def influence(self, focal: str) -> np.ndarray:
        """Weights h with beta_m(y) = h . y for any outcome y."""
        return self.scores @ self.xtx_inv[self.index(focal)]


@dataclass(frozen=True)
class CoefficientKernel:
    name: str
    b: np.ndarray
    V: np.ndarray
    dof_t: int
    se_type: str
    L: float
    identity_gaps: np.ndarray
    tol_zero: float = 0.0

    @property
    def K(self) -> int:
        return self.b.size + 1

    def beta(self, w) -> float:
        return float(self.b @ np.asarray(w, dtype=float))

    def variance(self, w) -> float:
        w = np.asarray(w, dtype=float)
        return float(w @ self.V @ w)

    def t(self, w) -> float:
        var = self.variance(w)
        if var <= 0:
            raise ValueError("zero variance at this gap vector")
        return self.beta(w) / np.sqrt(var)


def _check_rank(X: np.ndarray, names: list[str]) -> None:
    _, R, piv = sla.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = max(X.shape) * np.finfo(float).eps * (diag[0] if diag.size else 0.0)
    rank = int(np.sum(diag > tol))
    if rank < X.shape[1]:
        bad = [names[j] for j in piv[rank:]]
        raise DataError(f"design is rank deficient; offending column(s): {', '.join(bad)}")


def _demean(A: np.ndarray, groups: np.ndarray) -> np.ndarray:
    G = groups.max() + 1
    counts = np.bincount(groups, minlength=G).astype(float)
    out = np.empty_like(A)
    for j in range(A.shape[1]):
        means = np.bincount(groups, weights=A[:, j], minlength=G) / counts
        out[:, j] = A[:, j] - means[groups]
    return out


def cut_matrix(codes: np.ndarray, K: int) -> np.ndarray:
    return (codes[:, None] <= np.arange(1, K)[None, :]).astype(float)


def _unique_cuts(codes: np.ndarray, K: int) -> np.ndarray:
    """Representative cut for each cut; cut k repeats k-1 when category k is empty."""
    counts = np.bincount(codes, minlength=K + 1)[1:]
    rep = np.arange(K - 1)
    for k in range(1, K - 1):
        if counts[k] == 0:
            rep[k] = rep[k - 1]
    return rep


def fit_battery(data: Dataset) -> DichotomizedBattery:
    d = data.design
    codes, K = data.outcome.codes, data.K
    X, names = d.X, list(d.names)
    estimator = data.estimator
    n_units = 0

    D = cut_matrix(codes, K)
    rep = _unique_cuts(codes, K)
    uniq = np.unique(rep)
    n_obs = codes.size
    below = np.array([np.sum(codes <= k) for k in range(1, K)])
    constant = (below == 0) | (below == n_obs)

    if estimator == "fe":
        keep = [j for j, n in enumerate(names) if n != INTERCEPT]
        X = _demean(X[:, keep], d.unit_ids)
        names = [names[j] for j in keep]
        Dw = _demean(D[:, uniq], d.unit_ids)
        n_units = int(d.unit_ids.max() + 1)
        _check_rank(X, names)
        Q, R = np.linalg.qr(X)
        Rinv = sla.solve_triangular(R, np.eye(R.shape[0]))
        bread = Rinv @ Rinv.T
        scores = X
        beta_u = Rinv @ (Q.T @ Dw)
        resid_u = Dw - X @ beta_u
        dof = n_obs - X.shape[1] - n_units
    elif estimator == "tsls":
        Z = d.Z
        _check_rank(X, names)
        _check_rank(Z, names)
        ZX = Z.T @ X
        try:
            bread = np.linalg.solve(ZX, np.eye(ZX.shape[0]))
        except np.linalg.LinAlgError:
            raise DataError("instruments are not relevant: Z'X is singular") from None
        scores = Z
        beta_u = bread @ (Z.T @ D[:, uniq])
        resid_u = D[:, uniq] - X @ beta_u
        dof = n_obs - X.shape[1]
    else:
        _check_rank(X, names)
        Q, R = np.linalg.qr(X)
        Rinv = sla.solve_triangular(R, np.eye(R.shape[0]))
        bread = Rinv @ Rinv.T
        scores = X
        beta_u = Rinv @ (Q.T @ D[:, uniq])
        resid_u = D[:, uniq] - X @ beta_u
        dof = n_obs - X.shape[1]

    if dof <= 0:
        raise DataError("no residual degrees of freedom")

    pos = {u: i for i, u in enumerate(uniq)}
    beta_d = np.empty((K - 1, len(names)))
    resid_d = np.empty((n_obs, K - 1))
    for k in range(K - 1):
        i = pos[rep[k]]
        beta_d[k] = beta_u[:, i]
        resid_d[:, k] = resid_u[:, i]
        if constant[k]:
            # all-zero or all-one indicator: exact fit through the constant
            beta_d[k] = 0.0
            if below[k] == n_obs and INTERCEPT in names:
                beta_d[k, names.index(INTERCEPT)] = 1.0
            resid_d[:, k] = 0.0

    cluster_sums = None
    cluster_ids = d.cluster_ids
    if cluster_ids is not None:
        G = int(cluster_ids.max() + 1)
        cluster_sums = np.zeros((G, len(names), K - 1))
        np.add.at(cluster_sums, cluster_ids, scores[:, :, None] * resid_d[:, None, :])

    return DichotomizedBattery(
        names=names,
        labels=data.outcome.labels.copy(),
        beta_d=beta_d,
        resid_d=resid_d,
        xtx_inv=bread,
        scores=scores,
        estimator=estimator,
        dof_resid=int(dof),
        cluster_ids=cluster_ids,
        cluster_sums=cluster_sums,
        cut_groups=rep,
        constant_cuts=constant,
        n_units=n_units,
        design=X,
        unit_ids=d.unit_ids if estimator == "fe" else None,
    )


def _gaps(battery: DichotomizedBattery, w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.shape != (battery.cut_count,):
        raise ValueError(f"gap vector must have length {battery.cut_count}")
    return w


def recompose_beta(battery: DichotomizedBattery, w, focal: str) -> float:
    w = _gaps(battery, w)
    return float(-battery.beta_d[:, battery.index(focal)] @ w)


def recompose_residuals(battery: DichotomizedBattery, w) -> np.ndarray:
    return -battery.resid_d @ _gaps(battery, w)


def _small_sample_factors(battery: DichotomizedBattery, policy: str) -> tuple[float, float]:
    if policy not in SMALL_SAMPLE_POLICIES:
        raise ValueError(f"small_sample must be one of {SMALL_SAMPLE_POLICIES}")
    if policy == "none":
        return 1.0, 1.0
    N, dof = battery.N, battery.dof_resid
    hc1 = N / dof
    if battery.cluster_ids is None:
        return hc1, 1.0
    G = int(battery.cluster_ids.max() + 1)
    return hc1, (G / (G - 1)) * ((N - 1) / dof)


def build_kernel(battery: DichotomizedBattery, focal: str, se_type: str = "homoskedastic",
                 small_sample: str = "default") -> CoefficientKernel:
    m = battery.index(focal)
    E = battery.resid_d
    a = battery.xtx_inv[m]
    hc1, cl = _small_sample_factors(battery, small_sample)
    if se_type == "homoskedastic":
        h = battery.scores @ a
        V = (h @ h) * (E.T @ E) / battery.dof_resid
        dof_t = battery.dof_resid
    elif se_type == "robust":
        h = battery.scores @ a
        V = hc1 * ((E * (h**2)[:, None]).T @ E)
        dof_t = battery.dof_resid
    elif se_type == "clustered":
        if battery.cluster_sums is None:
            raise DataError("clustered standard errors need cluster ids")
        S = np.einsum("gmk,m->gk", battery.cluster_sums, a)
        V = cl * (S.T @ S)
        dof_t = int(battery.cluster_sums.shape[0] - 1)
    else:
        raise ValueError(f"unknown se_type {se_type!r}")
    V = 0.5 * (V + V.T)
    b = -battery.beta_d[:, m]
    scale = np.max(np.abs(b)) if b.size else 0.0
    return CoefficientKernel(
        name=focal, b=b, V=V, dof_t=dof_t, se_type=se_type, L=battery.L,
        identity_gaps=battery.identity_gaps, tol_zero=1e-12 * scale,
    )


@dataclass(frozen=True)
class OutcomeFit:
    beta: np.ndarray
    se: np.ndarray
    resid: np.ndarray
    dof_t: int


def fit_outcome(battery: DichotomizedBattery, y, se_type: str = "homoskedastic",
                small_sample: str = "default") -> OutcomeFit:
    """Regress an arbitrary outcome on the battery's design.

    Reuses the fitted bread and scores, so FE and 2SLS variants apply as well.
    """
    y = np.asarray(y, dtype=float)
    B = battery.xtx_inv @ battery.scores.T
    y_used = y
    if battery.estimator == "fe":
        y_used = _demean(y[:, None], battery.unit_ids)[:, 0]
    beta = B @ y_used
    e = y_used - battery.design @ beta
    hc1, cl = _small_sample_factors(battery, small_sample)
    if se_type == "homoskedastic":
        var = np.sum(B**2, axis=1) * (e @ e) / battery.dof_resid
        dof_t = battery.dof_resid
    elif se_type == "robust":
        var = hc1 * np.sum((B * e) ** 2, axis=1)
        dof_t = battery.dof_resid
    elif se_type == "clustered":
        G = int(battery.cluster_ids.max() + 1)
        S = np.zeros((G, B.shape[0]))
        np.add.at(S, battery.cluster_ids, (B * e).T)
        var = cl * np.sum(S**2, axis=0)
        dof_t = G - 1
    else:
        raise ValueError(f"unknown se_type {se_type!r}")
    return OutcomeFit(beta=beta, se=np.sqrt(var), resid=e, dof_t=dof_t)

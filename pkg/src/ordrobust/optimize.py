"""Solvers on the gap slice ``{w : sum(w) = L, w >= eps}``.

* ``solve_qp`` -- active-set method for convex QPs with a few equality rows
  and lower bounds (min-cost reversal, fixed-ratio, unbudgeted t-bounds).
* ``project_slice`` / ``linear_min_on_budget`` -- exact minimization of a
  linear function over the slice intersected with a variance budget ball.
* ``dinkelbach_max_ratio`` -- max of (b.w)^2 / w'Vw on the slice.
* ``max_abs_t_on_budget`` / ``min_norm_with_t_floor`` -- second-order cone
  programs (Clarabel) for budgeted t-maximization.
* ``min_abs_t_on_budget`` -- multi-start majorize-minimize for the
  nonconvex budgeted t-minimization.
* ``grid_oracle`` -- exhaustive lattice search used for verification.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.optimize import linprog
from scipy.special import comb

log = logging.getLogger(__name__)


class InfeasibleError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    pass


# -- active-set QP -----------------------------------------------------------

@dataclass(frozen=True)
class SimplexSliceQP:
    """min w'Qw + c.w  s.t.  sum(w) = L, a_i.w = r_i, w >= floor."""

    quadratic: np.ndarray
    linear: np.ndarray
    eq_constraints: list = field(default_factory=list)
    bound_floor: float = 0.0
    range: float = 1.0


@dataclass
class QPResult:
    x: np.ndarray
    objective: float
    kkt_residual: float
    active: np.ndarray
    eq_multipliers: np.ndarray
    bound_multipliers: np.ndarray
    iterations: int


def _feasible_start(A, c, lo):
    n = A.shape[1]
    res = linprog(np.zeros(n), A_eq=A, b_eq=c, bounds=[(l, None) for l in lo], method="highs")
    if res.status != 0:
        raise InfeasibleError("equality constraints cannot be met above the floor")
    return np.maximum(res.x, lo)


def active_set_qp(H, g, A, c, lo, x0=None, max_iter=None) -> QPResult:
    """Minimize ``0.5 x'Hx + g.x`` subject to ``Ax = c`` and ``x >= lo``.

    ``H`` must be positive semidefinite; the feasible set is assumed bounded
    or the objective bounded below.  Pivoting always picks the lowest index
    among ties.
    """
    H = np.asarray(H, dtype=float)
    g = np.asarray(g, dtype=float)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    c = np.atleast_1d(np.asarray(c, dtype=float))
    n = g.size
    lo = np.broadcast_to(np.asarray(lo, dtype=float), (n,)).copy()
    x = _feasible_start(A, c, lo) if x0 is None else np.maximum(np.asarray(x0, float), lo)
    if np.max(np.abs(A @ x - c), initial=0) > 1e-9 * (1 + np.abs(c).max()):
        x = _feasible_start(A, c, lo)

    scale = 1.0 + np.abs(g).max() + np.abs(H).max() * (1.0 + np.abs(x).max())
    tol = 1e-13 * scale
    W = x - lo <= 1e-14 * (1.0 + np.abs(lo))
    x[W] = lo[W]
    max_iter = max_iter or 20 * n + 100

    for it in range(1, max_iter + 1):
        F = ~W
        grad = H @ x + g
        p = np.zeros(n)
        unbounded = False
        if F.any():
            AF = A[:, F]
            Z = sla.null_space(AF) if AF.size else np.eye(F.sum())
            if Z.shape[1]:
                Hr = Z.T @ H[np.ix_(F, F)] @ Z
                gr = Z.T @ grad[F]
                y, *_ = np.linalg.lstsq(Hr, -gr, rcond=1e-12)
                if np.linalg.norm(Hr @ y + gr) > 1e-9 * (1.0 + np.linalg.norm(gr)):
                    # singular reduced Hessian with gradient in its null space: ray step
                    U, s, Vt = np.linalg.svd(Hr)
                    null = Vt[s <= 1e-12 * max(s.max(initial=0), 1.0)]
                    d = -(null.T @ (null @ gr))
                    p[F] = Z @ d
                    unbounded = True
                else:
                    p[F] = Z @ y

        if not unbounded and np.abs(p).max() <= 1e-13 * (1.0 + np.abs(x).max()):
            rows = F if F.any() else np.ones(n, bool)
            nu = np.linalg.lstsq(A[:, rows].T, grad[rows], rcond=None)[0]
            mu = grad - A.T @ nu
            mu[F] = 0.0
            if not W.any() or mu[W].min() >= -tol:
                return _qp_result(H, g, A, c, lo, x, W, nu, mu, it)
            j = int(np.flatnonzero(W & (mu <= mu[W].min() + 1e-15 * scale))[0])
            W[j] = False
            continue

        neg = F & (p < 0)
        steps = np.full(n, np.inf)
        steps[neg] = (x[neg] - lo[neg]) / -p[neg]
        alpha = steps.min(initial=np.inf)
        if not unbounded:
            alpha = min(alpha, 1.0)
        elif not np.isfinite(alpha):
            raise ConvergenceError("QP objective unbounded below on the feasible set")
        x = x + alpha * p
        if alpha < 1.0 or unbounded:
            j = int(np.flatnonzero(steps <= alpha * (1 + 1e-12))[0])
            W[j] = True
            x[j] = lo[j]
        x = np.maximum(x, lo)

    raise ConvergenceError(f"active-set QP did not converge in {max_iter} iterations")


def _qp_result(H, g, A, c, lo, x, W, nu, mu, it) -> QPResult:
    grad = H @ x + g
    stat = grad - A.T @ nu - mu
    scale = 1.0 + np.abs(grad).max() + np.abs(A.T @ nu).max()
    resid = max(
        np.abs(stat).max() / scale,
        max(-mu.min(), 0.0) / scale,
        np.abs(A @ x - c).max() / (1.0 + np.abs(c).max()),
        max((lo - x).max(), 0.0),
        np.abs(mu * (x - lo)).max() / scale,
    )
    obj = float(0.5 * x @ H @ x + g @ x)
    return QPResult(x, obj, float(resid), W.copy(), nu, mu, it)


def solve_qp(problem: SimplexSliceQP, x0=None) -> QPResult:
    Q = np.asarray(problem.quadratic, dtype=float)
    n = Q.shape[0]
    rows = [np.ones(n)] + [np.asarray(a, float) for a, _ in problem.eq_constraints]
    rhs = [problem.range] + [float(r) for _, r in problem.eq_constraints]
    res = active_set_qp(2.0 * Q, problem.linear, np.vstack(rows), np.array(rhs),
                        np.full(n, problem.bound_floor), x0=x0)
    return res


# -- slice geometry -------------------------------------------------------------

def project_slice(y, L: float, eps: float = 0.0) -> np.ndarray:
    """Euclidean projection onto ``{w : sum(w) = L, w >= eps}``."""
    y = np.asarray(y, dtype=float)
    n = y.size
    total = L - n * eps
    if total < 0:
        raise InfeasibleError("floor too large for the range")
    u = y - eps
    s = np.sort(u)[::-1]
    css = np.cumsum(s) - total
    idx = np.arange(1, n + 1)
    rho = np.flatnonzero(s - css / idx > 0)
    r = rho[-1] if rho.size else 0
    theta = css[r] / (r + 1)
    return np.maximum(u - theta, 0.0) + eps


def slice_center(n: int, L: float) -> np.ndarray:
    return np.full(n, L / n)


def max_radius(n: int, L: float, eps: float = 0.0) -> float:
    """Distance from the slice center to its farthest (near-)vertex."""
    v = np.full(n, eps)
    v[0] = L - (n - 1) * eps
    return float(np.linalg.norm(v - L / n))


def near_vertex(n: int, k: int, L: float, eps: float) -> np.ndarray:
    v = np.full(n, eps)
    v[k] = L - (n - 1) * eps
    return v


def linear_min_on_budget(a, L: float, eps: float, radius: float) -> np.ndarray:
    """argmin ``a.w`` over the slice with ``||w - center|| <= radius``.

    The minimizer lies on the projection path ``project_slice(center - t a)``,
    which is piecewise linear in ``t``: coordinates hit the floor in
    decreasing order of ``a``.  On each piece the squared distance to the
    center is quadratic in ``t``, so the radius crossing is solved exactly.
    """
    a = np.asarray(a, dtype=float)
    n = a.size
    center = slice_center(n, L)
    if radius <= 0 or n == 0 or np.ptp(a) == 0.0:
        return center.copy()
    # the minimizer only depends on the direction; rescaling avoids underflow.
    # No global centering: it would bury tiny differences under the mean.
    a = a / np.abs(a).max()
    scale = np.ptp(a)
    order = np.argsort(-a, kind="stable")
    free = np.ones(n, dtype=bool)
    c0 = L / n
    t_prev = 0.0
    for j in range(n):
        F = free
        nf = F.sum()
        abar = a[F].mean()
        d = a[F] - abar
        d -= d.mean()
        off = (nf * c0 - L + j * eps) / nf
        # w_F(t) = c0 - off - t d ;  fixed coords sit at eps
        if np.abs(d).max() <= 1e-12 * scale:
            break
        # step along the unit direction so a tiny d does not spoil the quadratic
        nd = math.sqrt(d @ d)
        u = d / nd
        fixed_sq = j * (eps - c0) ** 2
        # ||w - center||^2 = fixed_sq + sum((off + s u)^2),  s = t * nd
        qb, qc = 2.0 * off * u.sum(), nf * off**2 + fixed_sq - radius**2
        k = order[j]
        # time at which the next coordinate (largest a) reaches the floor
        t_hit = (c0 - off - eps) / d[np.flatnonzero(F) == k][0] if a[k] - abar > 0 else np.inf
        root = math.sqrt(max(qb * qb - 4 * qc, 0.0))
        # cancellation-free form of the larger root; qc < 0 inside the ball
        s_cross = (-2 * qc / (qb + root)) if qb > 0 else (root - qb) / 2
        if s_cross <= t_hit * nd:
            s_step = max(s_cross, t_prev * nd)
            w = np.full(n, eps)
            w[F] = np.maximum(c0 - off - s_step * u, eps)
            return w
        t_prev = t_hit
        free = free.copy()
        free[k] = False
    # the free coordinates are tied, so the path ends at this breakpoint;
    # with one coordinate left this is the vertex of the whole slice
    w = np.full(n, eps)
    w[free] = (L - (n - free.sum()) * eps) / free.sum()
    return w


def budget_radius(c: float, K: int, L: float, alpha: float) -> float:
    """Euclidean radius around equal gaps matching a cost budget ``c``."""
    from .cost import variance_budget

    return math.sqrt((K - 1) * variance_budget(c, K, L, alpha))


# -- fractional programs --------------------------------------------------------

@dataclass
class RatioResult:
    w: np.ndarray
    ratio: float
    iterations: int
    converged: bool
    history: list[float] = field(default_factory=list)


def dinkelbach_max_ratio(b, V, L: float, eps: float, seeds=None, tol=1e-10,
                         max_iter=200) -> RatioResult:
    """Maximize ``(b.w)^2 / w'Vw`` over the slice.

    Each Dinkelbach step replaces the convex numerator by its tangent at the
    current iterate, giving the concave QP  max 2(b.w_k)(b.w) - lam w'Vw,
    solved with the active-set method.  The lam sequence is nondecreasing.
    Returns the best result over the seeds.
    """
    b = np.asarray(b, dtype=float)
    V = np.asarray(V, dtype=float)
    n = b.size
    if seeds is None:
        seeds = [slice_center(n, L)] + [near_vertex(n, k, L, eps) for k in range(n)]
    A = np.ones((1, n))
    lo = np.full(n, eps)
    best = None
    for w in seeds:
        w = np.asarray(w, dtype=float)
        num, den = (b @ w) ** 2, w @ V @ w
        if num <= 0 or den <= 0:
            continue
        lam = num / den
        history = [lam]
        converged = False
        it = 0
        for it in range(1, max_iter + 1):
            res = active_set_qp(2.0 * lam * V, -2.0 * (b @ w) * b, A, [L], lo, x0=w)
            w_new = res.x
            den = w_new @ V @ w_new
            if den <= 0:
                lam_new = np.inf
            else:
                lam_new = (b @ w_new) ** 2 / den
            if lam_new < lam:
                # numerical noise; MM guarantees ascent
                lam_new = lam
            history.append(lam_new)
            step = lam_new - lam
            w, lam = w_new, lam_new
            if not np.isfinite(lam) or step <= tol * max(lam, 1e-300):
                converged = True
                break
        cand = RatioResult(w, lam, it, converged, history)
        if best is None or cand.ratio > best.ratio * (1 + 1e-12) or (
                np.isclose(cand.ratio, best.ratio, rtol=1e-12) and tuple(cand.w) < tuple(best.w)):
            best = cand
    if best is None:
        # b orthogonal to every seed: the ratio is zero everywhere reachable
        w = slice_center(n, L)
        best = RatioResult(w, 0.0, 0, True, [0.0])
    return best


def _sqrt_psd(V):
    vals, vecs = np.linalg.eigh(0.5 * (V + V.T))
    vals = np.clip(vals, 0.0, None)
    keep = vals > 1e-14 * max(vals.max(initial=0.0), 1e-300)
    return (np.sqrt(vals[keep])[:, None] * vecs[:, keep].T)


def _clarabel(P, q, A, b, cones):
    import clarabel

    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.tol_gap_abs = 1e-12
    settings.tol_gap_rel = 1e-12
    settings.tol_feas = 1e-12
    settings.tol_ktratio = 1e-10
    settings.max_iter = 300
    Pm = sp.triu(sp.csc_matrix(P), format="csc")
    solver = clarabel.DefaultSolver(Pm, np.asarray(q, float), sp.csc_matrix(A),
                                    np.asarray(b, float), cones, settings)
    sol = solver.solve()
    status = str(sol.status)
    return sol, status


def _solved(status: str) -> bool:
    return status in ("Solved", "AlmostSolved")


def max_abs_t_on_budget(b, V, L: float, eps: float, radius: float | None = None):
    """max |b.w| / sqrt(w'Vw) over the slice within ``radius`` of equal gaps.

    Homogenizing ``w = L v / sum(v)`` turns each sign branch into a convex
    QP with one second-order cone: min v'Vv s.t. s b.v = 1, v >= (eps/L) sum(v),
    ||v - sum(v)/n|| <= sum(v) radius / L.  Returns ``(t_max, w)``; ``t_max`` is
    ``inf`` when a zero-variance direction carries a nonzero coefficient.
    """
    import clarabel

    b = np.asarray(b, dtype=float)
    V = np.asarray(V, dtype=float)
    n = b.size
    if radius is None:
        radius = max_radius(n, L, eps)
    delta = eps / L
    best_t, best_w = 0.0, slice_center(n, L)
    for s in (1.0, -1.0):
        A_rows = [s * b[None, :], -(np.eye(n) - delta * np.ones((n, n)))]
        rhs = [np.ones(1), np.zeros(n)]
        cones = [clarabel.ZeroConeT(1), clarabel.NonnegativeConeT(n)]
        if radius < max_radius(n, L, eps) * (1 - 1e-12):
            soc = np.vstack([(radius / L) * np.ones((1, n)), np.eye(n) - 1.0 / n])
            A_rows.append(-soc)
            rhs.append(np.zeros(n + 1))
            cones.append(clarabel.SecondOrderConeT(n + 1))
        sol, status = _clarabel(2.0 * V, np.zeros(n), np.vstack(A_rows), np.concatenate(rhs), cones)
        if not _solved(status):
            continue
        v = np.asarray(sol.x)
        q = float(v @ V @ v)
        sigma = v.sum()
        if sigma <= 0:
            continue
        w = L * v / sigma
        w = np.maximum(w, eps)
        w *= L / w.sum()
        t = np.inf if q <= 1e-300 else 1.0 / math.sqrt(q)
        if t > best_t:
            best_t, best_w = t, w
    return best_t, best_w


def min_norm_with_t_floor(b, V, L: float, eps: float, tau: float):
    """Closest gaps to equal gaps with |b.w| >= tau sqrt(w'Vw).

    Convex per sign branch (second-order cone).  Returns ``(w, sq_dist)`` or
    ``(None, inf)`` when no gap vector reaches ``tau``.
    """
    import clarabel

    b = np.asarray(b, dtype=float)
    n = b.size
    G = _sqrt_psd(np.asarray(V, float))
    center = slice_center(n, L)
    best = (None, np.inf)
    for s in (1.0, -1.0):
        A = np.vstack([np.ones((1, n)), -np.eye(n), -(s * b)[None, :], -tau * G])
        rhs = np.concatenate([[L], -np.full(n, eps), [0.0], np.zeros(G.shape[0])])
        cones = [clarabel.ZeroConeT(1), clarabel.NonnegativeConeT(n),
                 clarabel.SecondOrderConeT(1 + G.shape[0])]
        sol, status = _clarabel(2.0 * np.eye(n), -2.0 * center, A, rhs, cones)
        if not _solved(status):
            continue
        w = np.maximum(np.asarray(sol.x), eps)
        w *= L / w.sum()
        d2 = float(np.sum((w - center) ** 2))
        if d2 < best[1]:
            best = (w, d2)
    return best


def min_abs_t_on_budget(b, V, L: float, eps: float, radius: float, seeds=None,
                        max_iter=500, tol=1e-13):
    """min |b.w| / sqrt(w'Vw) over the slice within ``radius`` of equal gaps.

    Assumes ``b.w`` keeps one sign on the feasible set (otherwise the minimum
    is zero and the caller handles it).  The ratio is pseudoconcave there, so
    minima sit on the boundary; each iteration majorizes the norm by its
    tangent and takes the exact linear minimizer over the budgeted slice.
    Multi-start over equal gaps and directions toward every near-vertex and
    every coordinate pair.
    """
    b = np.asarray(b, dtype=float)
    V = np.asarray(V, dtype=float)
    n = b.size
    center = slice_center(n, L)
    s = 1.0 if b @ center >= 0 else -1.0
    sb = s * b

    def ratio(w):
        q = w @ V @ w
        return np.inf if q <= 0 else (sb @ w) / math.sqrt(q)

    if seeds is None:
        seeds = [center]
        dirs = [near_vertex(n, k, L, eps) - center for k in range(n)]
        for i, j in itertools.combinations(range(n), 2):
            e = np.zeros(n)
            e[i], e[j] = 1.0, -1.0
            dirs += [e, -e]
        for d in dirs:
            nd = np.linalg.norm(d)
            if nd > 0:
                seeds.append(project_slice(center + 0.999 * radius * d / nd, L, eps))
    best_w, best_val = center, ratio(center)
    for w in seeds:
        w = np.asarray(w, dtype=float)
        val = ratio(w)
        for _ in range(max_iter):
            q = w @ V @ w
            if q <= 0:
                break
            grad = V @ w / math.sqrt(q)
            w_new = linear_min_on_budget(sb - val * grad, L, eps, radius)
            new = ratio(w_new)
            if not new < val - tol * max(abs(val), 1e-300):
                if new < val:
                    w, val = w_new, new
                break
            w, val = w_new, new
        if val < best_val - 1e-15 or (abs(val - best_val) <= 1e-15 and tuple(w) < tuple(best_w)):
            best_w, best_val = w, val
    return max(best_val, 0.0), best_w


# -- budget bisection --------------------------------------------------------------

def bisect_budget(reaches, lo: float = 0.0, hi: float = 1.0, tol: float = 1e-4) -> float:
    """Smallest budget in [lo, hi] where the monotone predicate ``reaches`` holds."""
    if reaches(lo):
        return lo
    if not reaches(hi):
        raise InfeasibleError("target not reachable within the budget range")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if reaches(mid):
            hi = mid
        else:
            lo = mid
    return hi


# -- exhaustive lattice oracle ---------------------------------------------------

MAX_ORACLE_K = 6


def lattice_count(K: int, R: int, closed: bool = False) -> int:
    n = K - 1
    return int(comb(R + n - 1 if closed else R - 1, n - 1, exact=True))


def lattice(K: int, L: float, R: int, eps: float | None = None) -> np.ndarray:
    """Gap lattice at resolution ``R``.

    Without ``eps``: all ``w = m L / R`` with integer ``m_k >= 1`` summing to
    ``R`` (the open simplex).  With ``eps``: the closed lattice on the floored
    slice, ``w = eps + m (L - n eps) / R`` with ``m_k >= 0``, whose boundary
    points sit exactly on the gap floor.
    """
    if K > MAX_ORACLE_K:
        raise ValueError(f"grid oracle limited to K <= {MAX_ORACLE_K}")
    n = K - 1
    if n == 1:
        return np.array([[float(L)]])
    if eps is not None:
        m = lattice(K, float(R + n), R + n) - 1.0
        return eps + m * ((L - n * eps) / R)
    bars = np.array(list(itertools.combinations(range(1, R), n - 1)), dtype=int)
    if bars.size == 0:
        return np.empty((0, n))
    edges = np.column_stack([np.zeros(len(bars), int), bars, np.full(len(bars), R)])
    return np.diff(edges, axis=1) * (L / R)


def grid_oracle(objective, K: int, L: float, resolution: int, maximize: bool = False,
                eps: float | None = None):
    """Exhaustive search of a vectorized objective over the gap lattice.

    ``objective`` maps an (P, K-1) array of gap vectors to P values;
    non-finite values mark infeasible points.  Ties resolve to the
    lexicographically smallest gap vector.  ``eps`` selects the closed
    lattice on the floored slice (see :func:`lattice`).
    """
    pts = lattice(K, L, resolution, eps)
    vals = np.asarray(objective(pts), dtype=float)
    ok = np.isfinite(vals)
    if not ok.any():
        return None, (-np.inf if maximize else np.inf)
    v = np.where(ok, vals, -np.inf if maximize else np.inf)
    target = v.max() if maximize else v.min()
    idx = np.flatnonzero(v == target)
    order = np.lexsort(pts[idx].T[::-1])
    i = idx[order[0]]
    return pts[i], float(vals[i])


def zoom_oracle(objective, K: int, L: float, resolution: int, maximize: bool = False,
                levels: int = 4, half: int = 8, starts: int = 1, eps: float | None = None):
    """Grid oracle followed by successively finer local lattices.

    Each level searches a lattice of ``(2 half + 1)^(K-2)`` points spanning
    two coarse cells on either side of the incumbent, in directions
    ``e_i - e_last``.  The ``starts`` best coarse points are refined
    separately, which guards against a nonconvex problem whose coarse
    winner sits in the wrong basin.  With ``eps`` the search covers the
    floored slice including its boundary; otherwise gaps stay positive.
    """
    pts = lattice(K, L, resolution, eps)
    vals = np.asarray(objective(pts), dtype=float)
    ok = np.isfinite(vals)
    if not ok.any():
        return None, (-np.inf if maximize else np.inf)
    n = K - 1
    v = np.where(ok, vals, -np.inf if maximize else np.inf)
    order = np.argsort(-v if maximize else v, kind="stable")[:max(1, starts)]
    order = [i for i in order if np.isfinite(v[i])]
    if n < 2:
        return pts[order[0]], float(vals[order[0]])
    D = np.zeros((n - 1, n))
    D[np.arange(n - 1), np.arange(n - 1)] = 1.0
    D[:, -1] = -1.0
    offsets = np.array(list(itertools.product(range(-half, half + 1), repeat=n - 1)), float)
    best_w, best_val = None, None
    for i in order:
        w, val = pts[i], float(vals[i])
        step = 2.0 * (L / resolution) / half
        for _ in range(levels):
            cand = w + step * offsets @ D
            cand = cand[(cand > 0).all(axis=1) if eps is None
                        else (cand >= eps * (1 - 1e-12)).all(axis=1)]
            cv = np.asarray(objective(cand), dtype=float)
            good = np.isfinite(cv)
            if good.any():
                cv = np.where(good, cv, -np.inf if maximize else np.inf)
                j = int(np.argmax(cv) if maximize else np.argmin(cv))
                if (cv[j] > val) if maximize else (cv[j] < val):
                    w, val = cand[j], float(cv[j])
            step *= 2.0 / half
        if best_val is None or ((val > best_val) if maximize else (val < best_val)):
            best_w, best_val = w, val
    return best_w, best_val

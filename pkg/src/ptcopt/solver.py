"""Dense LP solver and the conditional-gradient engine for robust counterparts.

Everything here is pure and deterministic: the simplex uses Bland's rule in
both phases, so repeated calls on the same data give identical pivots.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DimensionMismatch, NotConverged, NotPsd, NumericalBreakdown

_PIVOT_TOL = 1e-9
_HARD_PIVOT_TOL = 1e-12


class LpStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass(frozen=True)
class LpProblem:
    """Standard-form LP: min c.x subject to A x = b, x >= 0."""

    c: np.ndarray
    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.c, dtype=np.float64)
        A = np.asarray(self.A, dtype=np.float64)
        b = np.asarray(self.b, dtype=np.float64)
        if A.ndim != 2 or c.ndim != 1 or b.ndim != 1:
            raise DimensionMismatch("c and b must be vectors, A a matrix")
        m, n = A.shape
        if c.shape[0] != n or b.shape[0] != m:
            raise DimensionMismatch(
                f"inconsistent LP dims: A is {m}x{n}, c has {c.shape[0]}, b has {b.shape[0]}"
            )
        if not (np.isfinite(c).all() and np.isfinite(A).all() and np.isfinite(b).all()):
            raise DimensionMismatch("LP data must be finite")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def shape(self) -> tuple[int, int]:
        return self.A.shape


@dataclass
class LpSolution:
    x: np.ndarray
    value: float
    status: LpStatus
    gap: float | None = None  # Frank-Wolfe certificate when applicable


@dataclass(frozen=True)
class PsdFactor:
    """Lower-triangular L with L L^T = Q + jitter * I."""

    lower: np.ndarray
    dim: int
    jitter: float = 0.0

    def matrix(self) -> np.ndarray:
        """The factored matrix Q~ = L L^T."""
        return self.lower @ self.lower.T


@dataclass
class FwOptions:
    gap_tol: float = 1e-6
    gap_rel: float = 0.0  # extra allowance gap_rel * |objective|
    max_iter: int = 5000
    line_search_iters: int = 90


def _pivot(tab: np.ndarray, row: int, col: int) -> None:
    piv = tab[row, col]
    if abs(piv) < _HARD_PIVOT_TOL:
        raise NumericalBreakdown(f"pivot {piv:.3e} below 1e-12")
    tab[row] = tab[row] / piv
    factors = tab[:, col].copy()
    factors[row] = 0.0
    tab -= np.outer(factors, tab[row])
    tab[:, col] = 0.0
    tab[row, col] = 1.0


def _bland_iterate(tab: np.ndarray, basis: list[int], ncols: int) -> LpStatus:
    """Run Bland-rule pivots until optimal or unbounded.

    tab has shape (m+1, ncols+1): body rows, objective row last; rhs column
    last.  Reduced costs live in tab[-1, :ncols].
    """
    while True:
        candidates = np.flatnonzero(tab[-1, :ncols] < -_PIVOT_TOL)
        if candidates.size == 0:
            return LpStatus.OPTIMAL
        entering = int(candidates[0])
        col = tab[:-1, entering]
        rhs = tab[:-1, -1]
        rows = np.flatnonzero(col > _PIVOT_TOL)
        if rows.size == 0:
            return LpStatus.UNBOUNDED
        ratios = rhs[rows] / col[rows]
        best = ratios.min()
        tied = rows[ratios <= best + 1e-12]
        leave = min(tied, key=lambda i: basis[i])
        _pivot(tab, leave, entering)
        basis[leave] = entering


def solve_lp_simplex(problem: LpProblem, feas_tol: float = 1e-9) -> LpSolution:
    """Two-phase primal simplex with Bland's anti-cycling rule.

    Phase 1 introduces artificial variables, so any sign of b is accepted.
    Returns status optimal/infeasible/unbounded; deterministic on its input.
    """
    A = problem.A.copy()
    b = problem.b.copy()
    c = problem.c
    m, n = A.shape

    neg = b < 0
    A[neg] *= -1.0
    b[neg] *= -1.0

    # phase 1: minimize the sum of artificials starting from the artificial basis
    tab = np.zeros((m + 1, n + m + 1))
    tab[:m, :n] = A
    tab[:m, n : n + m] = np.eye(m)
    tab[:m, -1] = b
    tab[-1, :n] = -A.sum(axis=0)
    tab[-1, -1] = -b.sum()
    basis = list(range(n, n + m))

    status = _bland_iterate(tab, basis, n + m)
    if status is not LpStatus.OPTIMAL:
        raise NumericalBreakdown("phase-1 objective unbounded")
    phase1_obj = -tab[-1, -1]
    if phase1_obj > feas_tol * (1.0 + abs(b).max(initial=0.0)):
        return LpSolution(np.zeros(n), float("nan"), LpStatus.INFEASIBLE)

    # drive remaining artificials out of the basis; drop redundant rows
    keep = []
    for i in range(m):
        if basis[i] < n:
            keep.append(i)
            continue
        row = tab[i, :n]
        candidates = np.flatnonzero(np.abs(row) > _PIVOT_TOL)
        if candidates.size:
            _pivot(tab, i, int(candidates[0]))
            basis[i] = int(candidates[0])
            keep.append(i)
        # else: redundant constraint, row dropped below

    body = tab[keep, :]
    basis = [basis[i] for i in keep]
    mm = len(keep)

    # phase 2: rebuild the objective row for the real costs
    tab2 = np.zeros((mm + 1, n + 1))
    tab2[:mm, :n] = body[:, :n]
    tab2[:mm, -1] = body[:, -1]
    cb = c[basis]
    tab2[-1, :n] = c - cb @ tab2[:mm, :n]
    tab2[-1, -1] = cb @ tab2[:mm, -1]

    status = _bland_iterate(tab2, basis, n)
    x = np.zeros(n)
    x[basis] = tab2[:mm, -1]
    if status is LpStatus.UNBOUNDED:
        return LpSolution(x, float("-inf"), LpStatus.UNBOUNDED)
    return LpSolution(x, float(c @ x), LpStatus.OPTIMAL)


def cholesky_jittered(Q: np.ndarray, jitter_rel: float = 1e-8) -> PsdFactor:
    """Cholesky of Q + lambda*I with lambda = jitter_rel * trace(Q)/n.

    On breakdown lambda escalates tenfold up to 1e-2 * trace(Q)/n before
    giving up with NotPsd.  A zero-trace Q falls back to base scale 1.0 so
    degenerate (all-zero) covariances still factor.
    """
    Q = np.asarray(Q, dtype=np.float64)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        raise DimensionMismatch("Q must be square")
    n = Q.shape[0]
    scale = max(1.0, np.abs(Q).max(initial=0.0))
    if np.abs(Q - Q.T).max(initial=0.0) > 1e-9 * scale:
        raise ValueError("Q must be symmetric within 1e-9")
    Qs = 0.5 * (Q + Q.T)
    trace = float(np.trace(Qs))
    base = trace / n if trace > 0 else 1.0
    cap = 1e-2 * base
    lam = jitter_rel * base
    while True:
        try:
            L = np.linalg.cholesky(Qs + lam * np.eye(n))
            return PsdFactor(lower=L, dim=n, jitter=lam)
        except np.linalg.LinAlgError:
            nxt = 1e-8 * base if lam == 0.0 else lam * 10.0
            if nxt > cap * (1.0 + 1e-12):
                raise NotPsd(f"factorization failed at maximum jitter {lam:.3e}")
            lam = nxt


def mahalanobis(r: np.ndarray, factor: PsdFactor) -> float:
    """sqrt(r^T (L L^T)^{-1} r) via a triangular solve."""
    r = np.asarray(r, dtype=np.float64)
    if r.shape != (factor.dim,):
        raise DimensionMismatch(f"residual has length {r.shape}, factor dim {factor.dim}")
    y = solve_triangular(factor.lower, r, lower=True)
    return float(np.linalg.norm(y))


def mahalanobis_batch(R: np.ndarray, factor: PsdFactor) -> np.ndarray:
    """Row-wise mahalanobis for a (T, n) residual matrix."""
    R = np.asarray(R, dtype=np.float64)
    if R.ndim != 2 or R.shape[1] != factor.dim:
        raise DimensionMismatch("residual matrix does not match factor dim")
    Y = solve_triangular(factor.lower, R.T, lower=True)
    return np.linalg.norm(Y, axis=0)


def solve_lin_plus_norm(
    problem: LpProblem,
    factor: PsdFactor,
    weight: float,
    opts: FwOptions | None = None,
) -> LpSolution:
    """Minimize c.x + weight * sqrt(x^T Q x) over {Ax=b, x>=0} by Frank-Wolfe.

    The norm is smoothed to sqrt(x^T Q x + delta), delta = 1e-9 * trace(Q)/n,
    which keeps the gradient defined at x = 0.  solve_lp_simplex is the
    linear oracle.  Stops at duality gap <= gap_tol (+ gap_rel * |value|) or
    raises NotConverged (carrying the best iterate) after max_iter.
    """
    if opts is None:
        opts = FwOptions()
    if weight < 0:
        raise ValueError("weight must be nonnegative")
    n = problem.shape[1]
    if factor.dim != n:
        raise DimensionMismatch("factor dim does not match problem")
    if weight == 0.0:
        return solve_lp_simplex(problem)

    L = factor.lower
    Q = L @ L.T
    trace = float(np.trace(Q))
    delta = 1e-9 * (trace / n) if trace > 0 else 1e-18

    def smooth_norm_sq(x):
        y = L.T @ x
        return float(y @ y) + delta

    def objective(x):
        return float(problem.c @ x + weight * np.sqrt(max(smooth_norm_sq(x) - delta, 0.0)))

    start = solve_lp_simplex(problem)
    if start.status is not LpStatus.OPTIMAL:
        return start
    x = start.x
    gap = float("inf")
    for _ in range(opts.max_iter):
        qx = Q @ x
        denom = np.sqrt(smooth_norm_sq(x))
        grad = problem.c + weight * qx / denom
        oracle = solve_lp_simplex(LpProblem(grad, problem.A, problem.b))
        if oracle.status is not LpStatus.OPTIMAL:
            return LpSolution(x, objective(x), oracle.status)
        s = oracle.x
        d = s - x
        gap = float(grad @ (x - s))
        if gap <= opts.gap_tol + opts.gap_rel * abs(objective(x)):
            return LpSolution(x, objective(x), LpStatus.OPTIMAL, gap=max(gap, 0.0))
        # exact line search on the smoothed objective along x + t d, t in [0, 1]
        lin = float(problem.c @ d)
        a2 = float(d @ Q @ d)
        a1 = 2.0 * float(x @ Q @ d)
        a0 = smooth_norm_sq(x)

        def phi(t):
            return lin * t + weight * np.sqrt(max(a2 * t * t + a1 * t + a0, delta))

        lo, hi = 0.0, 1.0
        for _ in range(opts.line_search_iters):
            m1 = lo + (hi - lo) / 3.0
            m2 = hi - (hi - lo) / 3.0
            if phi(m1) <= phi(m2):
                hi = m2
            else:
                lo = m1
        t = 0.5 * (lo + hi)
        if phi(t) > phi(0.0):
            t = 0.0
        if phi(1.0) < phi(t):
            t = 1.0
        x = x + t * d
    best = LpSolution(x, objective(x), LpStatus.OPTIMAL, gap=gap)
    raise NotConverged(
        f"Frank-Wolfe gap {gap:.3e} above tolerance after {opts.max_iter} iterations",
        solution=best,
        gap=gap,
    )

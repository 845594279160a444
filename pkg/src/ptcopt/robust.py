"""Tractable robust counterparts LP(U) and the empirical-CVaR linear program.

The decision polytope is given in a bounded natural form (equality rows,
inequality rows, per-variable bounds) and converted to standard form
internally: variables with negative lower bounds are split into positive and
negative parts, finite upper bounds become slack rows.  The split is exact
for every set variant here: the support function depends only on x, and for
boxes the minimal-split solution attains the per-coordinate worst case.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, NotConverged
from .sets import Box, Ellipsoid, NormBall, UncertaintySet
from .solver import (
    FwOptions,
    LpProblem,
    LpSolution,
    LpStatus,
    PsdFactor,
    cholesky_jittered,
    solve_lin_plus_norm,
    solve_lp_simplex,
)


@dataclass(frozen=True)
class Constraints:
    """Bounded decision polytope in natural form.

    a_eq x = b_eq, a_ub x <= b_ub, lower <= x <= upper.  Lower bounds must be
    <= 0 (zero is the common case; negative bounds trigger a variable split);
    a negative lower bound requires a nonnegative upper bound.
    """

    n: int
    a_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    a_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    lower: np.ndarray | None = None  # default zeros
    upper: np.ndarray | None = None  # default +inf

    def __post_init__(self):
        n = self.n
        a_eq = np.zeros((0, n)) if self.a_eq is None else np.atleast_2d(np.asarray(self.a_eq, dtype=np.float64))
        b_eq = np.zeros(0) if self.b_eq is None else np.atleast_1d(np.asarray(self.b_eq, dtype=np.float64))
        a_ub = np.zeros((0, n)) if self.a_ub is None else np.atleast_2d(np.asarray(self.a_ub, dtype=np.float64))
        b_ub = np.zeros(0) if self.b_ub is None else np.atleast_1d(np.asarray(self.b_ub, dtype=np.float64))
        lower = np.zeros(n) if self.lower is None else np.asarray(self.lower, dtype=np.float64)
        upper = np.full(n, np.inf) if self.upper is None else np.asarray(self.upper, dtype=np.float64)
        if a_eq.shape[1] != n or a_ub.shape[1] != n:
            raise DimensionMismatch("constraint rows do not match variable count")
        if a_eq.shape[0] != b_eq.shape[0] or a_ub.shape[0] != b_ub.shape[0]:
            raise DimensionMismatch("right-hand sides do not match row counts")
        if lower.shape != (n,) or upper.shape != (n,):
            raise DimensionMismatch("bounds must have length n")
        if np.any(lower > 0):
            raise ValueError("positive lower bounds are not supported")
        if np.any((lower < 0) & (upper < 0)):
            raise ValueError("negative lower bounds require nonnegative upper bounds")
        if np.any(~np.isfinite(lower)):
            raise ValueError("lower bounds must be finite")
        for name, arr in (("a_eq", a_eq), ("b_eq", b_eq), ("a_ub", a_ub),
                          ("b_ub", b_ub), ("upper", upper)):
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "lower", lower)


@dataclass(frozen=True)
class StandardForm:
    """Result of conversion to min over {A v = b, v >= 0} with x = M v."""

    A: np.ndarray
    b: np.ndarray
    M: np.ndarray  # (n, N): original x from standard-form v


def standard_form(cons: Constraints) -> StandardForm:
    n = cons.n
    cols: list[np.ndarray] = []  # columns of M for the decision part
    plus_col: list[int] = [-1] * n
    minus_col: list[int] = [-1] * n
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        plus_col[i] = len(cols)
        cols.append(e)
        if cons.lower[i] < 0:
            minus_col[i] = len(cols)
            cols.append(-e)
    ndec = len(cols)

    bound_rows: list[np.ndarray] = []
    bound_rhs: list[float] = []
    for i in range(n):
        if np.isfinite(cons.upper[i]):
            row = np.zeros(ndec)
            row[plus_col[i]] = 1.0
            bound_rows.append(row)
            bound_rhs.append(max(cons.upper[i], 0.0))
        if cons.lower[i] < 0:
            row = np.zeros(ndec)
            row[minus_col[i]] = 1.0
            bound_rows.append(row)
            bound_rhs.append(-cons.lower[i])

    Mdec = np.column_stack(cols) if cols else np.zeros((n, 0))
    eq_part = cons.a_eq @ Mdec
    ub_part = cons.a_ub @ Mdec
    bound_part = np.asarray(bound_rows) if bound_rows else np.zeros((0, ndec))

    n_ub = cons.a_ub.shape[0]
    n_bnd = bound_part.shape[0]
    nslack = n_ub + n_bnd
    top = np.vstack([eq_part, ub_part, bound_part])
    slack = np.vstack([
        np.zeros((cons.a_eq.shape[0], nslack)),
        np.hstack([np.eye(n_ub), np.zeros((n_ub, n_bnd))]),
        np.hstack([np.zeros((n_bnd, n_ub)), np.eye(n_bnd)]),
    ])
    A = np.hstack([top, slack])
    b = np.concatenate([cons.b_eq, cons.b_ub, np.asarray(bound_rhs)])
    M = np.hstack([Mdec, np.zeros((n, nslack))])
    return StandardForm(A=A, b=b, M=M)


@dataclass(frozen=True)
class RobustProblem:
    set: UncertaintySet
    constraints: Constraints

    def __post_init__(self):
        if self.set.dim != self.constraints.n:
            raise DimensionMismatch("set dimension does not match constraints")


@dataclass
class RobustSolution:
    x: np.ndarray
    worst_case_value: float
    status: LpStatus


def worst_case_objective(uset: UncertaintySet, x: np.ndarray) -> float:
    """Support-function value max_{c in U} c.x."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (uset.dim,):
        raise DimensionMismatch("x length does not match set dimension")
    if isinstance(uset, Box):
        mid = 0.5 * (uset.lower + uset.upper)
        half = 0.5 * (uset.upper - uset.lower)
        return float(mid @ x + half @ np.abs(x))
    if isinstance(uset, Ellipsoid):
        y = uset.factor.lower.T @ x
        return float(uset.center @ x + uset.radius * np.sqrt(y @ y))
    if isinstance(uset, NormBall):
        return float(uset.center @ x + uset.radius * np.linalg.norm(x))
    raise TypeError(f"unknown set type {type(uset).__name__}")


def solve_robust(problem: RobustProblem, opts: FwOptions | None = None) -> RobustSolution:
    """Solve min_x max_{c in U} c.x over the constraint polytope.

    Boxes reduce exactly to a plain LP (upper-corner objective on the
    nonnegative standard-form variables); ellipsoids and norm balls go
    through the conditional-gradient solver.  The reported value is always
    the support function at the returned point, not a solver surrogate.
    """
    sf = standard_form(problem.constraints)
    uset = problem.set
    if isinstance(uset, Box):
        m_pos = np.maximum(sf.M, 0.0)
        m_neg = np.maximum(-sf.M, 0.0)
        c_std = m_pos.T @ uset.upper - m_neg.T @ uset.lower
        sol = solve_lp_simplex(LpProblem(c_std, sf.A, sf.b))
    else:
        if isinstance(uset, Ellipsoid):
            shape_lower = uset.factor.lower
            radius = uset.radius
        else:
            shape_lower = np.eye(uset.dim)
            radius = uset.radius
        c_std = sf.M.T @ uset.center
        if radius == 0.0:
            sol = solve_lp_simplex(LpProblem(c_std, sf.A, sf.b))
        else:
            mixed = sf.M.T @ shape_lower  # (N, n); Q~ = mixed mixed^T
            factor = cholesky_jittered(mixed @ mixed.T)
            try:
                sol = solve_lin_plus_norm(LpProblem(c_std, sf.A, sf.b), factor, radius, opts)
            except NotConverged as exc:
                x = sf.M @ exc.solution.x
                best = RobustSolution(x, worst_case_objective(uset, x), LpStatus.OPTIMAL)
                raise NotConverged(str(exc), solution=best, gap=exc.gap) from exc
    if sol.status is not LpStatus.OPTIMAL:
        return RobustSolution(np.zeros(problem.constraints.n), sol.value, sol.status)
    x = sf.M @ sol.x
    return RobustSolution(x, worst_case_objective(uset, x), LpStatus.OPTIMAL)


def check_guarantee(solution: RobustSolution, uset: UncertaintySet, c_realized: np.ndarray) -> dict:
    """Deterministic half of the robustness guarantee for one realization."""
    c_realized = np.asarray(c_realized, dtype=np.float64)
    if c_realized.shape != (uset.dim,):
        raise DimensionMismatch("realized objective does not match set dimension")
    covered = uset.contains(c_realized)
    cost_ok = bool(c_realized @ solution.x <= solution.worst_case_value + 1e-9)
    return {"covered": covered, "cost_ok": cost_ok}


@dataclass
class CvarSolution:
    x: np.ndarray
    gamma: float
    value: float
    status: LpStatus


def solve_cvar_lp(samples: np.ndarray, alpha: float, constraints: Constraints) -> CvarSolution:
    """Empirical-CVaR LP: min gamma + sum_k (c_k.x - gamma)^+ / (K (1-alpha)).

    Linearized with u_k >= c_k.x - gamma, u_k >= 0 and solved by the simplex.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    K = samples.shape[0]
    if K < 1:
        raise ValueError("need at least one sample")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be in (0, 1)")
    if samples.shape[1] != constraints.n:
        raise DimensionMismatch("sample dimension does not match constraints")

    sf = standard_form(constraints)
    N = sf.A.shape[1]
    m = sf.A.shape[0]
    # variables: [v (N), gamma+ , gamma-, u (K), w (K)]
    # rows: original m rows; then c_k.(M v) - gamma - u_k + w_k = 0
    csamp = samples @ sf.M  # (K, N)
    A = np.zeros((m + K, N + 2 + 2 * K))
    b = np.zeros(m + K)
    A[:m, :N] = sf.A
    b[:m] = sf.b
    A[m:, :N] = csamp
    A[m:, N] = -1.0
    A[m:, N + 1] = 1.0
    A[m:, N + 2 : N + 2 + K] = -np.eye(K)
    A[m:, N + 2 + K :] = np.eye(K)
    c = np.zeros(N + 2 + 2 * K)
    c[N] = 1.0
    c[N + 1] = -1.0
    c[N + 2 : N + 2 + K] = 1.0 / (K * (1.0 - alpha))
    sol = solve_lp_simplex(LpProblem(c, A, b))
    if sol.status is not LpStatus.OPTIMAL:
        return CvarSolution(np.zeros(constraints.n), float("nan"), sol.value, sol.status)
    x = sf.M @ sol.x[:N]
    gamma = float(sol.x[N] - sol.x[N + 1])
    return CvarSolution(x, gamma, float(sol.value), LpStatus.OPTIMAL)

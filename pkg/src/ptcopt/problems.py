"""Seeded data generators for the three benchmark problems and their oracles.

Every generator is a pure function of (sizes, seed); all randomness flows
through named SplitMix64 substreams so datasets, conditional samplers, and
goldens are reproducible.  Instances carry the decision polytope, a
conditional sampler c|z for test-time risk estimation, and a covariate
sampler for drawing test points from the marginal law.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DomainError
from .predictors import Dataset
from .robust import Constraints
from .streams import Stream, stream

GRID_SIDE = 5
N_EDGES = 40
COST_CLAMP = 1e-6


@dataclass
class ProblemInstance:
    dataset: Dataset
    constraints: list[Constraints]
    sampler: Callable[[np.ndarray, int, Stream], np.ndarray]
    covariate_sampler: Callable[[int, Stream], np.ndarray]
    meta: dict
    conditional_mean: Callable[[np.ndarray], np.ndarray] | None = None


# ---------------------------------------------------------------------------
# toy single-variable problem

def _toy_costs(z1: np.ndarray, eps: np.ndarray) -> np.ndarray:
    return (np.sign(z1) + eps) * np.sqrt(np.abs(z1))


def toy_conditional_mean(z: np.ndarray) -> np.ndarray:
    z = np.atleast_1d(np.asarray(z, dtype=np.float64))
    return np.array([np.sign(z[0]) * np.sqrt(abs(z[0]))])


def gen_toy(T: int, d: int, seed: int) -> ProblemInstance:
    """1-D decision in [-1, 1]; c = (sign(z1) + eps) * sqrt(|z1|).

    z_i ~ Unif[-0.5, 0.5] i.i.d., eps ~ Unif[-0.5, 0.5]; c depends only on
    the first covariate coordinate.
    """
    if T < 1 or d < 1:
        raise ValueError("need T >= 1 and d >= 1")
    Z = stream(seed, "toy", "z").uniform(T * d, -0.5, 0.5).reshape(T, d)
    eps = stream(seed, "toy", "eps").uniform(T, -0.5, 0.5)
    C = _toy_costs(Z[:, 0], eps)[:, None]
    cons = Constraints(n=1, lower=np.array([-1.0]), upper=np.array([1.0]))

    def sampler(z, m, strm):
        e = strm.uniform(m, -0.5, 0.5)
        return _toy_costs(np.full(m, float(z[0])), e)[:, None]

    def covariates(count, strm):
        return strm.uniform(count * d, -0.5, 0.5).reshape(count, d)

    meta = {"kind": "toy", "seed": seed, "T": T, "d": d, "n": 1}
    return ProblemInstance(Dataset(Z, C), [cons], sampler, covariates, meta,
                           conditional_mean=toy_conditional_mean)


# ---------------------------------------------------------------------------
# shortest path on a 5x5 grid (right/down edges)

def _grid_edges() -> list[tuple[int, int]]:
    """(tail, head) node pairs; nodes row-major, right edge before down edge."""
    edges = []
    for i in range(GRID_SIDE):
        for j in range(GRID_SIDE):
            node = GRID_SIDE * i + j
            if j < GRID_SIDE - 1:
                edges.append((node, node + 1))
            if i < GRID_SIDE - 1:
                edges.append((node, node + GRID_SIDE))
    return edges


def shortest_path_constraints() -> Constraints:
    """Node-arc incidence flow polytope: source top-left, sink bottom-right."""
    edges = _grid_edges()
    nn = GRID_SIDE * GRID_SIDE
    A = np.zeros((nn, len(edges)))
    for e, (tail, head) in enumerate(edges):
        A[tail, e] = 1.0
        A[head, e] = -1.0
    b = np.zeros(nn)
    b[0] = 1.0
    b[nn - 1] = -1.0
    return Constraints(n=len(edges), a_eq=A, b_eq=b)


def _bernoulli_matrix(rows: int, d: int, strm: Stream) -> np.ndarray:
    theta = (strm.uniform(rows * d) < 0.5).astype(np.float64).reshape(rows, d)
    theta[:, -2:] = 0.0  # last two covariates carry no signal
    return theta


def _sp_base(theta: np.ndarray, Z: np.ndarray) -> np.ndarray:
    d = Z.shape[-1]
    return ((Z @ theta.T) / np.sqrt(d) + 3.0) ** 5 + 1.0


def gen_shortest_path(T: int, d: int, seed: int) -> ProblemInstance:
    """Edge costs c_i = [((theta z)_i / sqrt(d) + 3)^5 + 1] * eps_i.

    z ~ N(0, I_d), eps_i ~ Unif[3/4, 5/4], theta Bernoulli(0.5) with the last
    two columns zeroed.  Costs are clamped below at 1e-6 (deep Gaussian left
    tail only); the clamp frequency is reported in meta.
    """
    if d < 3:
        raise ValueError("need d >= 3 (two zeroed columns plus signal)")
    theta = _bernoulli_matrix(N_EDGES, d, stream(seed, "sp", "theta"))
    Z = stream(seed, "sp", "z").normal(T * d).reshape(T, d)
    eps = stream(seed, "sp", "eps").uniform(T * N_EDGES, 0.75, 1.25).reshape(T, N_EDGES)
    raw = _sp_base(theta, Z) * eps
    clamped = raw < COST_CLAMP
    C = np.maximum(raw, COST_CLAMP)

    def sampler(z, m, strm):
        base = _sp_base(theta, np.asarray(z, dtype=np.float64)[None, :])[0]
        e = strm.uniform(m * N_EDGES, 0.75, 1.25).reshape(m, N_EDGES)
        return np.maximum(base * e, COST_CLAMP)

    def covariates(count, strm):
        return strm.normal(count * d).reshape(count, d)

    def cond_mean(z):
        return _sp_base(theta, np.asarray(z, dtype=np.float64)[None, :])[0]

    meta = {
        "kind": "shortest-path", "seed": seed, "T": T, "d": d, "n": N_EDGES,
        "theta": theta.astype(int).tolist(),
        "clamp_rate": float(clamped.mean()),
        "grid_side": GRID_SIDE,
    }
    return ProblemInstance(Dataset(Z, C), [shortest_path_constraints()],
                           sampler, covariates, meta, conditional_mean=cond_mean)


# ---------------------------------------------------------------------------
# fractional knapsack

def gen_knapsack_constraints(seed: int, n: int = 20, count: int = 10) -> list[Constraints]:
    """Fixed random (price, budget) pairs; x in [0,1]^n with p.x <= B.

    Prices are integers in [1, 1000]; B ~ Unif[max p, 1'p - u max p] with
    u ~ Unif[0, 1] (interval clamped to be nonempty when prices are extreme).
    """
    strm = stream(seed, "knapsack", "constraints")
    out = []
    for _ in range(count):
        p = strm.integers(1, 1000, n).astype(np.float64)
        u = float(strm.uniform(1)[0])
        lo = float(p.max())
        hi = max(lo, float(p.sum() - u * p.max()))
        B = lo + (hi - lo) * float(strm.uniform(1)[0])
        out.append(Constraints(n=n, a_ub=p[None, :], b_ub=np.array([B]),
                               upper=np.ones(n)))
    return out


def gen_knapsack(T: int, d: int, n: int = 20, seed: int = 0) -> ProblemInstance:
    """Utilities c = (theta z)^2 * eps; z ~ Unif[0,4]^d, eps ~ Unif[4/5, 6/5]."""
    if d < 3:
        raise ValueError("need d >= 3 (two zeroed columns plus signal)")
    theta = _bernoulli_matrix(n, d, stream(seed, "knapsack", "theta"))
    Z = stream(seed, "knapsack", "z").uniform(T * d, 0.0, 4.0).reshape(T, d)
    eps = stream(seed, "knapsack", "eps").uniform(T * n, 0.8, 1.2).reshape(T, n)
    C = (Z @ theta.T) ** 2 * eps

    def sampler(z, m, strm):
        base = (np.asarray(z, dtype=np.float64) @ theta.T) ** 2
        e = strm.uniform(m * n, 0.8, 1.2).reshape(m, n)
        return base * e

    def covariates(count, strm):
        return strm.uniform(count * d, 0.0, 4.0).reshape(count, d)

    def cond_mean(z):
        return (np.asarray(z, dtype=np.float64) @ theta.T) ** 2

    constraints = gen_knapsack_constraints(seed, n)
    meta = {
        "kind": "knapsack", "seed": seed, "T": T, "d": d, "n": n,
        "theta": theta.astype(int).tolist(),
        "constraint_sets": [
            {"p": cons.a_ub[0].astype(int).tolist(), "B": float(cons.b_ub[0])}
            for cons in constraints
        ],
    }
    return ProblemInstance(Dataset(Z, C), constraints, sampler, covariates, meta,
                           conditional_mean=cond_mean)


GENERATORS = {
    "toy": lambda T, d, n, seed: gen_toy(T, d, seed),
    "shortest-path": lambda T, d, n, seed: gen_shortest_path(T, d, seed),
    "knapsack": lambda T, d, n, seed: gen_knapsack(T, d, n, seed),
}


# ---------------------------------------------------------------------------
# regularized lower incomplete gamma (series + continued fraction)

_GAMMA_EPS = 1e-15
_GAMMA_MAX_ITER = 10_000


def regularized_gamma_p(a: float, x: float) -> float:
    """P(a, x) = gamma(a, x) / Gamma(a), abs accuracy ~1e-14.

    Power series for x < a + 1, Lentz continued fraction otherwise.
    """
    if a <= 0 or x < 0:
        raise DomainError("need a > 0 and x >= 0")
    if x == 0.0:
        return 0.0
    lg = math.lgamma(a)
    if x < a + 1.0:
        ap = a
        total = 1.0 / a
        term = total
        for _ in range(_GAMMA_MAX_ITER):
            ap += 1.0
            term *= x / ap
            total += term
            if abs(term) < abs(total) * _GAMMA_EPS:
                break
        return total * math.exp(-x + a * math.log(x) - lg)
    # continued fraction for Q(a, x)
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, _GAMMA_MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _GAMMA_EPS:
            break
    q = math.exp(-x + a * math.log(x) - lg) * h
    return 1.0 - q


def oracle_prob_zero(k: int, d: int, alpha: float) -> float:
    """Closed-form probability that the perfect-calibration robust solution
    is the conservative zero, for the additive-exponential generative model
    with a k-covariate prediction model."""
    if not (isinstance(k, (int, np.integer)) and isinstance(d, (int, np.integer))):
        raise DomainError("k and d must be integers")
    if not (1 <= k <= d):
        raise DomainError("need 1 <= k <= d")
    if not (0.5 < alpha < 1.0):
        raise DomainError("need alpha in (0.5, 1)")
    ratio = (1.0 + 1.0 / d) ** (d - k)
    x_hi = max(0.0, -d * math.log((1.0 - alpha) * ratio))
    x_lo = max(0.0, -d * math.log(alpha * ratio))
    return regularized_gamma_p(k, x_hi) - regularized_gamma_p(k, x_lo)


# ---------------------------------------------------------------------------
# closed forms for the value-of-calibration example

@dataclass(frozen=True)
class HalfLine:
    """One-sided interval, [lower, inf) or (-inf, upper]."""

    lower: float = -math.inf
    upper: float = math.inf

    def contains(self, c: float) -> bool:
        return self.lower <= c <= self.upper


def _toy_shift(alpha: float) -> float:
    return (1.0 - math.sqrt(2.0 - 2.0 * alpha)) / 2.0


def oracle_toy_set(z: float, alpha: float) -> HalfLine:
    """Coverage-alpha half-line set for the 1-D sign problem."""
    if alpha < 0.5 or alpha > 1.0:
        raise DomainError("need alpha >= 0.5")
    if not -1.0 <= z <= 1.0:
        raise DomainError("need z in [-1, 1]")
    shift = _toy_shift(alpha)
    if z >= 0:
        return HalfLine(lower=math.sqrt(z) - shift)
    return HalfLine(upper=-math.sqrt(-z) + shift)


def oracle_toy_threshold(alpha: float) -> float:
    return (3.0 - 2.0 * alpha - 2.0 * math.sqrt(2.0 - 2.0 * alpha)) / 4.0


def oracle_toy_solution(z: float, alpha: float) -> int:
    """Robust solution induced by oracle_toy_set on the [-1, 1] decision.

    Ties at the thresholds resolve toward the -1 branch first, matching the
    set's sign analysis (empty middle region at alpha = 1/2).
    """
    if alpha < 0.5 or alpha > 1.0:
        raise DomainError("need alpha >= 0.5")
    if not -1.0 <= z <= 1.0:
        raise DomainError("need z in [-1, 1]")
    tau = oracle_toy_threshold(alpha)
    if z >= tau:
        return -1
    if z <= -tau:
        return 1
    return 0


# ---------------------------------------------------------------------------
# dataset CSV + JSON sidecar

def save_dataset(instance: ProblemInstance, directory) -> tuple[str, str]:
    """Write <kind>.csv (header z_1..z_d,c_1..c_n) and <kind>.meta.json."""
    import os

    os.makedirs(directory, exist_ok=True)
    kind = instance.meta["kind"]
    Z, C = instance.dataset.Z, instance.dataset.C
    d, n = Z.shape[1], C.shape[1]
    csv_path = os.path.join(directory, f"{kind}.csv")
    meta_path = os.path.join(directory, f"{kind}.meta.json")
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"z_{i+1}" for i in range(d)] + [f"c_{i+1}" for i in range(n)])
        for zrow, crow in zip(Z, C):
            writer.writerow([repr(float(v)) for v in zrow] + [repr(float(v)) for v in crow])
    with open(meta_path, "w", encoding="utf-8") as fh:
        json.dump(instance.meta, fh, indent=1)
    return csv_path, meta_path


def load_dataset(csv_path, meta_path=None) -> tuple[Dataset, dict]:
    if meta_path is None:
        meta_path = str(csv_path).replace(".csv", ".meta.json")
    with open(meta_path, encoding="utf-8") as fh:
        meta = json.load(fh)
    with open(csv_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        d = sum(1 for name in header if name.startswith("z_"))
        rows = [[float(v) for v in row] for row in reader]
    data = np.asarray(rows, dtype=np.float64)
    return Dataset(data[:, :d], data[:, d:]), meta

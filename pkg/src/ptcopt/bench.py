"""Benchmark metrics, context-free baselines, and the experiment orchestrator.

run_experiment reproduces the benchmark protocol at desk scale: per trial it
generates a dataset, splits it 60/20/20 (learning / preliminary calibration /
final adjustment, the latter two inside the calibration fit), fits the point
predictor, calibrates each requested method, and evaluates value-at-risk and
set coverage on fresh test covariates with per-z conditional cost samples.
Cost samples are shared across methods so comparisons are paired.

All randomness is derived from (seed, trial, purpose) substreams, so results
are identical under any parallel schedule.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .calibrate import buq_fit, euq_fit, individual_fit, sample_conditional, set_at
from .dro import DroConfig, KernelSpec, default_bandwidth, dro_center, heuristic_epsilon, kernel_weights
from .errors import NoNeighbors, NotConverged, TooFewSamples
from .predictors import Dataset, PredictorConfig, QuantileConfig, fit_predictor, predict_batch
from .problems import GENERATORS
from .robust import Constraints, RobustProblem, solve_cvar_lp, solve_robust
from .sets import Box, Ellipsoid, NormBall
from .solver import FwOptions, LpStatus, cholesky_jittered, mahalanobis_batch
from .streams import stream, subseed

KNOWN_METHODS = ("ptc-b", "ptc-e", "ellipsoid", "knn", "dro", "individual", "cvar")

_PROBLEM_DEFAULTS = {
    "toy": {"d": 4, "n": 1, "test_count": 100,
            "predictor": PredictorConfig(kind="mlp"),
            "quantile": QuantileConfig(kind="mlp-pinball")},
    "shortest-path": {"d": 10, "n": 40, "test_count": 500,
                      "predictor": PredictorConfig(kind="kernel-rbf"),
                      "quantile": QuantileConfig(kind="mlp-pinball")},
    "knapsack": {"d": 10, "n": 20, "test_count": 100,
                 "predictor": PredictorConfig(kind="kernel-rbf"),
                 "quantile": QuantileConfig(kind="mlp-pinball")},
}

REPORT_COLUMNS = ("alpha", "method", "avg_var", "avg_opt", "avg_coverage", "trials", "seed")


# ---------------------------------------------------------------------------
# metrics

def var_from_costs(values: np.ndarray, alpha: float) -> float:
    """ceil(alpha*m)-th smallest sampled cost (lower order statistic)."""
    values = np.sort(np.asarray(values, dtype=np.float64))
    m = values.size
    if m < 1:
        raise ValueError("need at least one sample")
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must be in (0, 1]")
    k = min(m, math.ceil(alpha * m - 1e-9))
    return float(values[k - 1])


def estimate_var(x, z, sampler, alpha, m: int = 1000, rng=None) -> float:
    """Empirical VaR_alpha of c.x at covariate z from m conditional samples."""
    if rng is None:
        rng = stream(0, "estimate-var")
    costs = sampler(np.asarray(z, dtype=np.float64), m, rng)
    return var_from_costs(costs @ np.asarray(x, dtype=np.float64), alpha)


def estimate_coverage(set_fn, samples) -> float:
    """Mean frequency of c inside the set at its covariate over (z, c) pairs."""
    hits = [1.0 if set_fn(np.asarray(z)).contains(np.asarray(c)) else 0.0 for z, c in samples]
    if not hits:
        raise ValueError("need a nonempty test set")
    return float(np.mean(hits))


# ---------------------------------------------------------------------------
# context-free baselines

def baseline_ellipsoid(C_train: np.ndarray, alpha: float):
    """Covariate-blind Gaussian fit; radius covers a fraction alpha of the
    training samples exactly (order statistic of training distances).
    Returns a set_fn constant in z."""
    C_train = np.atleast_2d(np.asarray(C_train, dtype=np.float64))
    T, n = C_train.shape
    if T < n + 1:
        raise TooFewSamples(f"need at least {n + 1} samples for an {n}-dim ellipsoid")
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must be in (0, 1]")
    center = C_train.mean(axis=0)
    cov = np.cov(C_train, rowvar=False, ddof=1).reshape(n, n)
    factor = cholesky_jittered(cov)
    dists = np.sort(mahalanobis_batch(C_train - center, factor))
    k = min(T, math.ceil(alpha * T - 1e-9))
    radius = float(dists[k - 1])
    uset = Ellipsoid(center, factor, radius)
    return lambda z: uset


def baseline_knn(Z_train: np.ndarray, C_train: np.ndarray, alpha: float, z0: np.ndarray) -> Ellipsoid:
    """k-nearest-neighbor conditional set with k = max(sqrt(T), 2n).

    Covers all k neighbors: mean/covariance ellipsoid with radius equal to the
    largest neighbor distance (an approximation of the volume-minimizing
    cover).  alpha only enters through the benchmark protocol, not the set,
    which is why its coverage is flat across risk levels.  Ties in covariate
    distance break by sample index.
    """
    Z_train = np.atleast_2d(np.asarray(Z_train, dtype=np.float64))
    C_train = np.atleast_2d(np.asarray(C_train, dtype=np.float64))
    T, n = C_train.shape
    k = max(math.ceil(math.sqrt(T)), 2 * n)
    if T < k:
        raise TooFewSamples(f"need at least k={k} samples")
    dists = np.linalg.norm(Z_train - np.asarray(z0, dtype=np.float64), axis=1)
    neighbors = np.argsort(dists, kind="stable")[:k]
    pts = C_train[neighbors]
    center = pts.mean(axis=0)
    cov = np.cov(pts, rowvar=False, ddof=1).reshape(n, n)
    factor = cholesky_jittered(cov)
    radius = float(mahalanobis_batch(pts - center, factor).max())
    return Ellipsoid(center, factor, radius)


# ---------------------------------------------------------------------------
# experiment orchestration

@dataclass(frozen=True)
class ExperimentConfig:
    problem: str
    methods: tuple = ("ptc-b", "ptc-e", "ellipsoid")
    alphas: tuple = (0.8,)
    T: int = 1000
    d: int = 0          # 0 -> problem default
    n: int = 0          # 0 -> problem default
    trials: int = 1
    seed: int = 0
    test_count: int = 0  # 0 -> problem default
    test_scale: float = 1.0
    var_samples: int = 1000
    cvar_samples: int = 200
    learn_fraction: float = 0.6
    jobs: int = 1
    predictor: PredictorConfig | None = None
    quantile: QuantileConfig | None = None
    fw: FwOptions = field(default_factory=lambda: FwOptions(gap_rel=1e-6, max_iter=2000))

    def resolved(self) -> "ExperimentConfig":
        if self.problem not in _PROBLEM_DEFAULTS:
            raise ValueError(f"unknown problem {self.problem!r}")
        bad = [m for m in self.methods if m not in KNOWN_METHODS]
        if bad:
            raise ValueError(f"unknown methods {bad}")
        if not self.alphas:
            raise ValueError("need at least one alpha")
        defaults = _PROBLEM_DEFAULTS[self.problem]
        return replace(
            self,
            methods=tuple(self.methods),
            alphas=tuple(float(a) for a in self.alphas),
            d=self.d or defaults["d"],
            n=self.n or defaults["n"],
            test_count=self.test_count or defaults["test_count"],
            predictor=self.predictor or defaults["predictor"],
            quantile=self.quantile or defaults["quantile"],
        )


@dataclass
class ExperimentReport:
    rows: list
    config: ExperimentConfig
    failures: dict

    def to_csv(self) -> str:
        cols = list(REPORT_COLUMNS)
        if self.config.problem == "toy":
            cols.append("avg_scaled_var")
        lines = [",".join(cols)]
        for row in self.rows:
            lines.append(",".join(_csv_cell(row[c]) for c in cols))
        return "\n".join(lines) + "\n"


def _csv_cell(value) -> str:
    if isinstance(value, float):
        return repr(float(value))  # plain-float repr even for numpy scalars
    return str(value)


def _solve_robust_best(problem, opts):
    try:
        return solve_robust(problem, opts)
    except NotConverged as exc:
        return exc.solution


def _objective_sign(problem: str) -> float:
    # knapsack maximizes utility: minimize VaR of -c.x
    return -1.0 if problem == "knapsack" else 1.0


def _run_trial(config: ExperimentConfig, trial: int) -> dict:
    """One full trial; returns {(alpha, method): stats or error string}."""
    tseed = subseed(config.seed, "trial", trial)
    inst = GENERATORS[config.problem](config.T, config.d, config.n, tseed)
    Z, C = inst.dataset.Z, inst.dataset.C
    T = Z.shape[0]
    perm = stream(tseed, "learn-split").permutation(T)
    n_learn = int(round(config.learn_fraction * T))
    learn, val = perm[:n_learn], perm[n_learn:]
    Z_val, C_val = Z[val], C[val]
    sign = _objective_sign(config.problem)

    fhat = fit_predictor(Dataset(Z[learn], C[learn]), config.predictor,
                         subseed(tseed, "predictor"))

    ntest = max(1, int(round(config.test_count * config.test_scale)))
    Z_test = inst.covariate_sampler(ntest, stream(tseed, "test-z"))
    cost_samples = [
        inst.sampler(Z_test[i], config.var_samples, stream(tseed, "test-costs", i))
        for i in range(ntest)
    ]

    d_val = Z_val.shape[1]
    bandwidth = default_bandwidth(Z_val.shape[0], d_val)
    kspec = KernelSpec()

    results: dict = {}
    for alpha in config.alphas:
        for method in config.methods:
            try:
                results[(alpha, method)] = _run_method(
                    method, alpha, inst, fhat, Z_val, C_val, Z_test, cost_samples,
                    sign, bandwidth, kspec, config, tseed)
            except Exception as exc:  # isolate per-method failures
                results[(alpha, method)] = f"{type(exc).__name__}: {exc}"
    return results


def _run_method(method, alpha, inst, fhat, Z_val, C_val, Z_test, cost_samples,
                sign, bandwidth, kspec, config, tseed):
    ntest = Z_test.shape[0]
    aseed = subseed(tseed, "alpha", repr(alpha))

    set_fn = None          # z -> UncertaintySet, or None (cvar)
    solve_fn = None        # (z_index, constraints_index) -> RobustSolution-like

    if method == "ptc-b":
        calib = buq_fit(fhat, Z_val, C_val, alpha, 0.5, config.quantile,
                        subseed(aseed, "buq"))
        set_fn = lambda z: set_at(calib, z)
    elif method == "ptc-e":
        calib = euq_fit(fhat, Z_val, C_val, alpha, 0.5, config.quantile,
                        subseed(aseed, "euq"))
        set_fn = lambda z: set_at(calib, z)
    elif method == "ellipsoid":
        const_fn = baseline_ellipsoid(inst.dataset.C, alpha)
        set_fn = const_fn
    elif method == "knn":
        set_fn = lambda z: baseline_knn(inst.dataset.Z, inst.dataset.C, alpha, z)
    elif method == "individual":
        def set_fn(z):
            h = bandwidth
            for _ in range(8):  # widen on empty windows (curse of dimensionality)
                try:
                    return individual_fit(fhat, Z_val, C_val, alpha, kspec, h, z)
                except NoNeighbors:
                    h *= 2.0
            raise NoNeighbors("no neighbors even after widening the window")
    elif method == "dro":
        residual_matrix = C_val - predict_batch(fhat, Z_val)

        def set_fn(z):
            h = bandwidth
            for _ in range(8):
                try:
                    w = kernel_weights(Z_val, z, kspec, h)
                    break
                except NoNeighbors:
                    h *= 2.0
            else:
                raise NoNeighbors("no neighbors even after widening the window")
            r0 = dro_center(residual_matrix, w)
            eps = heuristic_epsilon(residual_matrix, w)
            center = predict_batch(fhat, z[None, :])[0] + r0
            return NormBall(center, eps)
    elif method == "cvar":
        def solve_cvar(z, cons, i):
            h = bandwidth
            for _ in range(8):
                try:
                    samples = sample_conditional(
                        fhat, Z_val, C_val, kspec, h, z,
                        config.cvar_samples, subseed(aseed, "cvar", i))
                    break
                except NoNeighbors:
                    h *= 2.0
            else:
                raise NoNeighbors("no neighbors even after widening the window")
            return solve_cvar_lp(sign * samples, alpha, cons)
    else:
        raise ValueError(f"unknown method {method!r}")

    sum_var = sum_opt = 0.0
    cov_num = 0.0
    cov_den = 0
    scaled_sum = 0.0
    scaled_den = 0
    count = 0
    const_cache: dict = {}
    for i in range(ntest):
        z = Z_test[i]
        costs = cost_samples[i]
        uset = set_fn(z) if set_fn is not None else None
        for ci, cons in enumerate(inst.constraints):
            if method == "cvar":
                sol = solve_cvar(z, cons, i * len(inst.constraints) + ci)
                if sol.status is not LpStatus.OPTIMAL:
                    raise RuntimeError(f"cvar LP returned {sol.status}")
                x, opt = sol.x, sol.value
            elif method == "ellipsoid" and ci in const_cache:
                x, opt = const_cache[ci]
            else:
                cost_set = uset.negate() if sign < 0 else uset
                rsol = _solve_robust_best(RobustProblem(cost_set, cons), config.fw)
                if rsol.status is not LpStatus.OPTIMAL:
                    raise RuntimeError(f"robust solve returned {rsol.status}")
                x, opt = rsol.x, rsol.worst_case_value
                if method == "ellipsoid":
                    const_cache[ci] = (x, opt)
            values = sign * (costs @ x)
            var = var_from_costs(values, alpha)
            sum_var += var
            sum_opt += opt
            count += 1
            if uset is not None:
                member = uset.contains_batch(costs)
                cov_num += float(member.sum())
                cov_den += member.size
            if config.problem == "toy" and inst.conditional_mean is not None:
                mean_obj = _expected_objective_optimum(inst.conditional_mean(z), cons)
                if abs(mean_obj) > 1e-6:
                    scaled_sum += var / mean_obj
                    scaled_den += 1
    return {
        "avg_var": sum_var / count,
        "avg_opt": sum_opt / count,
        "avg_coverage": (cov_num / cov_den) if cov_den else float("nan"),
        "avg_scaled_var": (scaled_sum / scaled_den) if scaled_den else float("nan"),
    }


def _expected_objective_optimum(mean_vector: np.ndarray, cons: Constraints) -> float:
    mean_vector = np.asarray(mean_vector, dtype=np.float64)
    sol = solve_robust(RobustProblem(Box(mean_vector, mean_vector), cons))
    return sol.worst_case_value


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    """Run all trials and aggregate one report row per (alpha, method)."""
    config = config.resolved()
    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            trial_results = list(pool.map(_run_trial, [config] * config.trials,
                                          range(config.trials)))
    else:
        trial_results = [_run_trial(config, t) for t in range(config.trials)]

    rows = []
    failures: dict = {}
    for alpha in config.alphas:
        for method in config.methods:
            stats = [res[(alpha, method)] for res in trial_results]
            errors = [s for s in stats if isinstance(s, str)]
            good = [s for s in stats if not isinstance(s, str)]
            if errors:
                failures[(alpha, method)] = errors
            row = {
                "alpha": alpha,
                "method": method,
                "trials": len(good),
                "seed": config.seed,
            }
            for key in ("avg_var", "avg_opt", "avg_coverage", "avg_scaled_var"):
                vals = [s[key] for s in good]
                finite = [v for v in vals if not math.isnan(v)]
                row[key] = float(np.mean(finite)) if finite else float("nan")
            rows.append(row)
    return ExperimentReport(rows=rows, config=config, failures=failures)

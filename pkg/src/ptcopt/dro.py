"""Kernel-weighted conditional mean estimation and the degenerate DRO LP.

The ambiguity set is a Euclidean ball around the kernel-weighted mean
residual at the target covariate, so the inner maximization is the support
function of a norm ball and the whole problem reduces to solve_robust.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NoNeighbors
from .predictors import predict_batch
from .sets import NormBall


@dataclass(frozen=True)
class KernelSpec:
    """Bounded-support kernel: uniform box (default) or truncated Gaussian.

    support_radius R bounds the support in the max-norm; b_r and b_R record
    the lower/upper density bounds on the support (informational).
    """

    kind: str = "uniform-box"  # uniform-box | truncated-gaussian
    support_radius: float = 1.0
    b_r: float = 1.0
    b_R: float = 1.0

    def evaluate(self, V: np.ndarray) -> np.ndarray:
        """Kernel values for scaled offsets V (rows are (z_t - z0)/h)."""
        V = np.atleast_2d(np.asarray(V, dtype=np.float64))
        inside = np.max(np.abs(V), axis=1) <= self.support_radius
        if self.kind == "uniform-box":
            return inside.astype(np.float64)
        if self.kind == "truncated-gaussian":
            return np.exp(-0.5 * (V * V).sum(axis=1)) * inside
        raise ValueError(f"unknown kernel kind {self.kind!r}")


@dataclass(frozen=True)
class DroConfig:
    epsilon: float | None = None  # None -> plug-in heuristic radius
    bandwidth: float | None = None  # None -> default_bandwidth(T, d, s)
    smoothness: float = 1.0

    def __post_init__(self):
        if self.epsilon is not None and (self.epsilon < 0 or not np.isfinite(self.epsilon)):
            raise ValueError("epsilon must be finite and >= 0")
        if self.bandwidth is not None and not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")
        if not self.smoothness > 0:
            raise ValueError("smoothness must be positive")


def kernel_weights(Z_val: np.ndarray, z0: np.ndarray, spec: KernelSpec, h: float) -> np.ndarray:
    """Normalized weights w_t proportional to K((z_t - z0)/h)."""
    if not h > 0:
        raise ValueError("bandwidth must be positive")
    Z_val = np.atleast_2d(np.asarray(Z_val, dtype=np.float64))
    z0 = np.asarray(z0, dtype=np.float64)
    if z0.shape != (Z_val.shape[1],):
        raise DimensionMismatch("z0 length does not match covariates")
    raw = spec.evaluate((Z_val - z0) / h)
    total = raw.sum()
    if total <= 0:
        raise NoNeighbors("all kernel weights are zero at z0")
    return raw / total


def dro_center(residual_matrix: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Weighted mean residual r0."""
    R = np.atleast_2d(np.asarray(residual_matrix, dtype=np.float64))
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (R.shape[0],):
        raise DimensionMismatch("weights length does not match residual rows")
    return w @ R


def default_bandwidth(T: int, d: int, s: float = 1.0) -> float:
    """Bandwidth rule h = T^(-1/(2s+2d))."""
    if T < 1 or d < 1 or not s > 0:
        raise ValueError("need T >= 1, d >= 1, s > 0")
    return float(T) ** (-1.0 / (2.0 * s + 2.0 * d))


def heuristic_epsilon(residual_matrix: np.ndarray, weights: np.ndarray) -> float:
    """Plug-in ambiguity radius: weighted std of norms * Npos^(-1/2) * log T.

    The theoretical radius has unknown constants; this surrogate keeps the
    same T-dependence and is documented as a heuristic.
    """
    R = np.atleast_2d(np.asarray(residual_matrix, dtype=np.float64))
    w = np.asarray(weights, dtype=np.float64)
    T = R.shape[0]
    npos = int((w > 0).sum())
    norms = np.linalg.norm(R, axis=1)
    mean = float(w @ norms)
    var = float(w @ (norms - mean) ** 2)
    spread = np.sqrt(max(var, 0.0))
    return spread * npos ** (-0.5) * np.log(max(T, 2))


def solve_dro(
    fhat,
    Z_val: np.ndarray,
    C_val: np.ndarray,
    z0: np.ndarray,
    constraints,
    config: DroConfig | None = None,
    spec: KernelSpec | None = None,
):
    """Distributionally robust LP at covariate z0.

    Estimates the conditional mean residual by kernel weighting, centers a
    norm-ball ambiguity set of radius epsilon on f(z0) + r0, and solves the
    resulting robust LP.
    """
    from .robust import RobustProblem, solve_robust

    if config is None:
        config = DroConfig()
    if spec is None:
        spec = KernelSpec()
    Z_val = np.atleast_2d(np.asarray(Z_val, dtype=np.float64))
    C_val = np.atleast_2d(np.asarray(C_val, dtype=np.float64))
    T, d = Z_val.shape
    h = config.bandwidth if config.bandwidth is not None else default_bandwidth(T, d, config.smoothness)
    w = kernel_weights(Z_val, z0, spec, h)
    R = C_val - predict_batch(fhat, Z_val)
    r0 = dro_center(R, w)
    eps = config.epsilon if config.epsilon is not None else heuristic_epsilon(R, w)
    center = predict_batch(fhat, np.asarray(z0, dtype=np.float64)[None, :])[0] + r0
    return solve_robust(RobustProblem(NormBall(center, eps), constraints))

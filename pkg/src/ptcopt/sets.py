"""Uncertainty-set variants: box, ellipsoid, and Euclidean norm ball.

Each set knows its dimension, membership test, and how to negate itself
(the reflection c -> -c), which the knapsack pipeline uses to turn a
utility set into a cost set.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch
from .solver import PsdFactor, cholesky_jittered, mahalanobis

_MEMBER_TOL = 1e-9


@dataclass(frozen=True)
class Box:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=np.float64)
        upper = np.asarray(self.upper, dtype=np.float64)
        if lower.shape != upper.shape or lower.ndim != 1:
            raise DimensionMismatch("box bounds must be equal-length vectors")
        if np.any(lower > upper + _MEMBER_TOL):
            raise ValueError("box lower bound exceeds upper bound")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    def contains(self, c: np.ndarray, tol: float = _MEMBER_TOL) -> bool:
        c = np.asarray(c, dtype=np.float64)
        return bool(np.all(c >= self.lower - tol) and np.all(c <= self.upper + tol))

    def contains_batch(self, C: np.ndarray, tol: float = _MEMBER_TOL) -> np.ndarray:
        C = np.asarray(C, dtype=np.float64)
        return np.all(C >= self.lower - tol, axis=1) & np.all(C <= self.upper + tol, axis=1)

    def negate(self) -> "Box":
        return Box(-self.upper, -self.lower)


@dataclass(frozen=True)
class Ellipsoid:
    """{c : sqrt((c-center)^T Q^{-1} (c-center)) <= radius}, Q = L L^T."""

    center: np.ndarray
    factor: PsdFactor
    radius: float

    def __post_init__(self):
        center = np.asarray(self.center, dtype=np.float64)
        if center.ndim != 1 or center.shape[0] != self.factor.dim:
            raise DimensionMismatch("ellipsoid center does not match factor dim")
        if self.radius < 0:
            raise ValueError("radius must be nonnegative")
        object.__setattr__(self, "center", center)

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    def contains(self, c: np.ndarray, tol: float = _MEMBER_TOL) -> bool:
        return mahalanobis(np.asarray(c) - self.center, self.factor) <= self.radius + tol

    def contains_batch(self, C: np.ndarray, tol: float = _MEMBER_TOL) -> np.ndarray:
        from .solver import mahalanobis_batch

        d = mahalanobis_batch(np.asarray(C, dtype=np.float64) - self.center, self.factor)
        return d <= self.radius + tol

    def negate(self) -> "Ellipsoid":
        return Ellipsoid(-self.center, self.factor, self.radius)


@dataclass(frozen=True)
class NormBall:
    """{c : ||c - center||_2 <= radius}."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        center = np.asarray(self.center, dtype=np.float64)
        if center.ndim != 1:
            raise DimensionMismatch("norm-ball center must be a vector")
        if self.radius < 0:
            raise ValueError("radius must be nonnegative")
        object.__setattr__(self, "center", center)

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    def contains(self, c: np.ndarray, tol: float = _MEMBER_TOL) -> bool:
        return bool(np.linalg.norm(np.asarray(c) - self.center) <= self.radius + tol)

    def contains_batch(self, C: np.ndarray, tol: float = _MEMBER_TOL) -> np.ndarray:
        d = np.linalg.norm(np.asarray(C, dtype=np.float64) - self.center, axis=1)
        return d <= self.radius + tol

    def negate(self) -> "NormBall":
        return NormBall(-self.center, self.radius)

    def shape_factor(self) -> PsdFactor:
        """Identity factor of matching dimension (a ball is a round ellipsoid)."""
        return cholesky_jittered(np.eye(self.dim), jitter_rel=0.0)


UncertaintySet = Box | Ellipsoid | NormBall

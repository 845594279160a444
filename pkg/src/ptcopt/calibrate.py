"""Split-conformal calibration of contextual uncertainty sets.

The two-stage recipe: fit a preliminary size model on one half of the
validation data (quantile model h for per-coordinate boxes, scalar g plus a
residual covariance for ellipsoids), then rescale by a single factor eta
chosen as an order statistic of per-sample conformity scores on the other
half.  The per-sample score is the minimal eta that makes the sample's
realized objective fall inside its uncertainty set, so the coverage
guarantee reduces to exchangeability of the scores.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EmptyScores, InfiniteEtaWarning, TooFewSamples
from .dro import KernelSpec, kernel_weights
from .predictors import (
    DEFAULT_FLOOR,
    QuantileConfig,
    fit_quantile,
    model_from_record,
    model_record,
    predict_batch,
)
from .sets import Box, Ellipsoid, NormBall, UncertaintySet
from .solver import PsdFactor, cholesky_jittered, mahalanobis_batch
from .streams import stream, subseed


@dataclass(frozen=True)
class SplitIndices:
    d1: np.ndarray
    d2: np.ndarray


def split_validation(T: int, ratio: float = 0.5, seed: int = 0) -> SplitIndices:
    """Disjoint two-way split: first ceil(ratio*T) of a seeded permutation."""
    if T < 4:
        raise TooFewSamples(f"need at least 4 validation samples, got {T}")
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must be in (0, 1)")
    perm = stream(seed, "split").permutation(T)
    k = math.ceil(ratio * T)
    k = min(max(k, 1), T - 1)
    return SplitIndices(d1=np.sort(perm[:k]), d2=np.sort(perm[k:]))


def residuals(model, Z: np.ndarray, C: np.ndarray) -> np.ndarray:
    """Row t is c_t minus the model prediction at z_t."""
    Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
    C = np.atleast_2d(np.asarray(C, dtype=np.float64))
    if Z.shape[0] != C.shape[0]:
        raise DimensionMismatch("Z and C must have the same number of rows")
    return C - predict_batch(model, Z)


def conformal_count(n2: int, alpha: float) -> int:
    """Order-statistic index k = min(n2, ceil(alpha*(n2+1))).

    The ceiling is taken with a 1e-9 slack so that float products that are
    mathematically integral (e.g. 0.7 * 10) do not round up.
    """
    return min(n2, math.ceil(alpha * (n2 + 1) - 1e-9))


def conformal_eta(scores, alpha: float) -> float:
    """Minimal scale achieving the required coverage count on held-out scores.

    Returns the k-th smallest score, k = min(n2, ceil(alpha*(n2+1))).  May be
    +inf if the k-th order statistic is infinite; the caller decides policy.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 1 or scores.size == 0:
        raise EmptyScores("scores must be a nonempty vector")
    if np.isnan(scores).any():
        raise ValueError("scores must not be NaN")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be in (0, 1)")
    k = conformal_count(scores.size, alpha)
    return float(np.sort(scores)[k - 1])


def box_scores(fhat, hhat, Z, C, floor: float = DEFAULT_FLOOR) -> np.ndarray:
    """Per-sample minimal eta for box sets: max_i |r_ti| / h(z_t)_i."""
    r = residuals(fhat, Z, C)
    h = np.maximum(predict_batch(hhat, np.atleast_2d(Z)), floor)
    if h.shape != r.shape:
        raise DimensionMismatch("quantile model output does not match residual shape")
    return np.max(np.abs(r) / h, axis=1)


def ellipsoid_scores(fhat, ghat, factor, Z, C, floor: float = DEFAULT_FLOOR) -> np.ndarray:
    """Per-sample minimal eta for ellipsoid sets: mahalanobis(r_t) / g(z_t)."""
    r = residuals(fhat, Z, C)
    g = np.maximum(predict_batch(ghat, np.atleast_2d(Z))[:, 0], floor)
    return mahalanobis_batch(r, factor) / g


@dataclass
class BoxCalibration:
    predictor: object
    quantile: object  # h: R^d -> R^n
    eta: float
    alpha: float

    @property
    def floor(self) -> float:
        return self.quantile.floor


@dataclass
class EllipsoidCalibration:
    predictor: object
    quantile: object  # scalar g
    factor: PsdFactor
    eta: float
    alpha: float

    @property
    def floor(self) -> float:
        return self.quantile.floor


def buq_fit(
    fhat,
    Z_val: np.ndarray,
    C_val: np.ndarray,
    alpha: float,
    split_ratio: float = 0.5,
    quantile_config: QuantileConfig | None = None,
    seed: int = 0,
) -> BoxCalibration:
    """Box uncertainty quantification.

    Fits the per-coordinate quantile model h on |r| over the first split and
    sets eta from the conformity scores of the second split.
    """
    Z_val = np.atleast_2d(np.asarray(Z_val, dtype=np.float64))
    C_val = np.atleast_2d(np.asarray(C_val, dtype=np.float64))
    idx = split_validation(Z_val.shape[0], split_ratio, subseed(seed, "buq-split"))
    r1 = residuals(fhat, Z_val[idx.d1], C_val[idx.d1])
    hhat = fit_quantile(
        Z_val[idx.d1], np.abs(r1), alpha, quantile_config, subseed(seed, "buq-quantile")
    )
    scores = box_scores(fhat, hhat, Z_val[idx.d2], C_val[idx.d2], hhat.floor)
    eta = conformal_eta(scores, alpha)
    if not np.isfinite(eta):
        warnings.warn("conformal scale is infinite; sets fall back to the "
                      "observed residual range", InfiniteEtaWarning)
    return BoxCalibration(fhat, hhat, eta, alpha)


def euq_fit(
    fhat,
    Z_val: np.ndarray,
    C_val: np.ndarray,
    alpha: float,
    split_ratio: float = 0.5,
    quantile_config: QuantileConfig | None = None,
    seed: int = 0,
) -> EllipsoidCalibration:
    """Ellipsoid uncertainty quantification.

    Fits a scalar quantile model g on ||r||_2 over the first split, estimates
    the covariance of the g-scaled residuals, and sets eta from the
    mahalanobis conformity scores of the second split.
    """
    Z_val = np.atleast_2d(np.asarray(Z_val, dtype=np.float64))
    C_val = np.atleast_2d(np.asarray(C_val, dtype=np.float64))
    idx = split_validation(Z_val.shape[0], split_ratio, subseed(seed, "euq-split"))
    r1 = residuals(fhat, Z_val[idx.d1], C_val[idx.d1])
    norms = np.linalg.norm(r1, axis=1)
    ghat = fit_quantile(
        Z_val[idx.d1], norms[:, None], alpha, quantile_config, subseed(seed, "euq-quantile")
    )
    g1 = np.maximum(predict_batch(ghat, Z_val[idx.d1])[:, 0], ghat.floor)
    scaled = r1 / g1[:, None]
    sigma = scaled.T @ scaled / scaled.shape[0]
    factor = cholesky_jittered(sigma)
    scores = ellipsoid_scores(fhat, ghat, factor, Z_val[idx.d2], C_val[idx.d2], ghat.floor)
    eta = conformal_eta(scores, alpha)
    if not np.isfinite(eta):
        warnings.warn("conformal scale is infinite; sets fall back to the "
                      "observed residual range", InfiniteEtaWarning)
    return EllipsoidCalibration(fhat, ghat, factor, eta, alpha)


def set_at(calibration, z: np.ndarray) -> UncertaintySet:
    """Concrete uncertainty set for one covariate."""
    z = np.asarray(z, dtype=np.float64)
    center = predict_batch(calibration.predictor, z[None, :])[0]
    if isinstance(calibration, BoxCalibration):
        h = np.maximum(predict_batch(calibration.quantile, z[None, :])[0], calibration.floor)
        if h.shape != center.shape:
            raise DimensionMismatch("quantile output does not match predictor output")
        half = calibration.eta * h
        return Box(center - half, center + half)
    if isinstance(calibration, EllipsoidCalibration):
        g = max(float(predict_batch(calibration.quantile, z[None, :])[0, 0]), calibration.floor)
        return Ellipsoid(center, calibration.factor, calibration.eta * g)
    raise TypeError(f"unknown calibration type {type(calibration).__name__}")


def individual_fit(
    fhat,
    Z_val: np.ndarray,
    C_val: np.ndarray,
    alpha: float,
    kernel: KernelSpec | None = None,
    bandwidth: float = 1.0,
    z0: np.ndarray | None = None,
) -> NormBall:
    """Kernel-weighted norm-ball set targeting coverage at one covariate.

    The radius is the smallest residual norm whose cumulative kernel weight
    at z0 reaches alpha (weighted empirical CDF of ||r||_2).
    """
    if z0 is None:
        raise ValueError("z0 is required")
    if kernel is None:
        kernel = KernelSpec()
    Z_val = np.atleast_2d(np.asarray(Z_val, dtype=np.float64))
    w = kernel_weights(Z_val, z0, kernel, bandwidth)
    r = residuals(fhat, Z_val, np.atleast_2d(C_val))
    norms = np.linalg.norm(r, axis=1)
    order = np.argsort(norms, kind="stable")
    cum = np.cumsum(w[order])
    hit = np.flatnonzero(cum >= alpha - 1e-9)
    pos = int(hit[0]) if hit.size else len(order) - 1
    radius = float(norms[order[pos]])
    center = predict_batch(fhat, np.asarray(z0, dtype=np.float64)[None, :])[0]
    return NormBall(center, radius)


def sample_conditional(
    fhat,
    Z_val: np.ndarray,
    C_val: np.ndarray,
    kernel: KernelSpec | None = None,
    bandwidth: float = 1.0,
    z0: np.ndarray | None = None,
    count: int = 1000,
    seed: int = 0,
) -> np.ndarray:
    """Synthetic objective vectors from the kernel-weighted residual law at z0.

    Draws residuals i.i.d. from the discrete weighted distribution and adds
    the point prediction at z0.
    """
    if z0 is None:
        raise ValueError("z0 is required")
    if kernel is None:
        kernel = KernelSpec()
    Z_val = np.atleast_2d(np.asarray(Z_val, dtype=np.float64))
    w = kernel_weights(Z_val, z0, kernel, bandwidth)
    r = residuals(fhat, Z_val, np.atleast_2d(C_val))
    idx = stream(seed, "conditional-sample").choice(w, count)
    center = predict_batch(fhat, np.asarray(z0, dtype=np.float64)[None, :])[0]
    return center + r[idx]


# ---------------------------------------------------------------------------
# serialization (same versioned record family as the predictors)

_FORMAT = "ptcopt-calibration-v1"


def calibration_record(calibration) -> dict:
    rec = {
        "format": _FORMAT,
        "alpha": calibration.alpha,
        "eta": calibration.eta,
        "predictor": model_record(calibration.predictor),
        "quantile": model_record(calibration.quantile),
    }
    if isinstance(calibration, BoxCalibration):
        rec["variant"] = "box"
    elif isinstance(calibration, EllipsoidCalibration):
        rec["variant"] = "ellipsoid"
        rec["sigma_lower"] = calibration.factor.lower.tolist()
        rec["sigma_jitter"] = calibration.factor.jitter
    else:
        raise TypeError(f"cannot serialize {type(calibration).__name__}")
    return rec


def calibration_from_record(rec: dict):
    if rec.get("format") != _FORMAT:
        raise ValueError(f"unsupported calibration record format {rec.get('format')!r}")
    fhat = model_from_record(rec["predictor"])
    qmodel = model_from_record(rec["quantile"])
    if rec["variant"] == "box":
        return BoxCalibration(fhat, qmodel, rec["eta"], rec["alpha"])
    lower = np.asarray(rec["sigma_lower"], dtype=np.float64)
    factor = PsdFactor(lower=lower, dim=lower.shape[0], jitter=rec.get("sigma_jitter", 0.0))
    return EllipsoidCalibration(fhat, qmodel, factor, rec["eta"], rec["alpha"])


def save_calibration(calibration, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(calibration_record(calibration), fh)


def load_calibration(path):
    with open(path, encoding="utf-8") as fh:
        return calibration_from_record(json.load(fh))

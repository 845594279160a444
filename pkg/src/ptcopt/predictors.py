"""Point-prediction models and pinball-loss quantile regressors.

Models are trained on the learning split and are agnostic to the downstream
robust task.  Three point-predictor families: closed-form ridge regression,
RBF kernel ridge, and a small tanh MLP.  Quantile models share the MLP
engine (a linear quantile model is the zero-hidden-layer case) and clamp
their predictions at a positive floor because calibration divides by them.

Training internals standardize inputs and targets and use Adam-preconditioned
(sub)gradient steps; quantile fits are affine-equivariant, so the recovered
prediction is still the target-space quantile.  All randomness (init, batch
shuffling) flows from the seed argument.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigInvalid, DimensionMismatch, SingularSystem
from .solver import cholesky_jittered
from .streams import stream

DEFAULT_FLOOR = 1e-6


@dataclass(frozen=True)
class Dataset:
    """Covariates Z (T x d) and objectives C (T x n)."""

    Z: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        Z = np.atleast_2d(np.asarray(self.Z, dtype=np.float64))
        C = np.atleast_2d(np.asarray(self.C, dtype=np.float64))
        if Z.shape[0] != C.shape[0]:
            raise DimensionMismatch("Z and C must have the same number of rows")
        if not (np.isfinite(Z).all() and np.isfinite(C).all()):
            raise DimensionMismatch("dataset entries must be finite")
        object.__setattr__(self, "Z", Z)
        object.__setattr__(self, "C", C)

    @property
    def size(self) -> int:
        return self.Z.shape[0]


@dataclass(frozen=True)
class PredictorConfig:
    kind: str = "linear"  # linear | kernel-rbf | mlp
    ridge_lambda: float = 1e-3
    rbf_sigma: float | None = None  # None -> median pairwise distance
    hidden: tuple[int, ...] = (64, 64)
    learning_rate: float = 1e-3
    epochs: int = 200
    batch_size: int = 32

    def validate(self):
        if self.kind not in ("linear", "kernel-rbf", "mlp"):
            raise ConfigInvalid(f"unknown predictor kind {self.kind!r}")
        if self.ridge_lambda < 0:
            raise ConfigInvalid("ridge_lambda must be >= 0")
        if self.rbf_sigma is not None and self.rbf_sigma <= 0:
            raise ConfigInvalid("rbf_sigma must be > 0")
        if any(h <= 0 for h in self.hidden):
            raise ConfigInvalid("hidden layer sizes must be positive")
        if self.learning_rate <= 0 or self.epochs <= 0 or self.batch_size <= 0:
            raise ConfigInvalid("learning_rate, epochs, batch_size must be positive")


@dataclass(frozen=True)
class QuantileConfig:
    kind: str = "linear-pinball"  # linear-pinball | mlp-pinball
    hidden: tuple[int, ...] = (64, 64)
    learning_rate: float = 1e-3
    epochs: int = 200
    batch_size: int = 32
    floor: float = DEFAULT_FLOOR

    def validate(self):
        if self.kind not in ("linear-pinball", "mlp-pinball"):
            raise ConfigInvalid(f"unknown quantile kind {self.kind!r}")
        if any(h <= 0 for h in self.hidden):
            raise ConfigInvalid("hidden layer sizes must be positive")
        if self.learning_rate <= 0 or self.epochs <= 0 or self.batch_size <= 0:
            raise ConfigInvalid("learning_rate, epochs, batch_size must be positive")
        if self.floor <= 0:
            raise ConfigInvalid("floor must be positive")


class _Scaler:
    """Per-column affine standardization; zero-variance columns pass through."""

    def __init__(self, X: np.ndarray):
        self.mean = X.mean(axis=0)
        sd = X.std(axis=0)
        sd[sd == 0.0] = 1.0
        self.sd = sd

    def transform(self, X):
        return (X - self.mean) / self.sd

    def inverse(self, X):
        return X * self.sd + self.mean


class _MlpCore:
    """Tanh MLP with explicit parameter arrays and backprop.

    sizes = (in, h1, ..., out).  loss_and_grad supports squared and pinball
    loss; for pinball the subgradient at an exact kink is taken as zero.
    """

    def __init__(self, sizes: tuple[int, ...], seed: int):
        self.sizes = tuple(int(s) for s in sizes)
        rng = stream(seed, "mlp-init")
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            w = rng.normal(fan_out * fan_in).reshape(fan_out, fan_in) / np.sqrt(fan_in)
            self.weights.append(w)
            self.biases.append(np.zeros(fan_out))

    def forward(self, X: np.ndarray) -> np.ndarray:
        h = X
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            h = np.tanh(h @ w.T + b)
        return h @ self.weights[-1].T + self.biases[-1]

    def loss_and_grad(self, X, Y, loss: str, alpha: float = 0.5):
        acts = [X]
        h = X
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            h = np.tanh(h @ w.T + b)
            acts.append(h)
        pred = h @ self.weights[-1].T + self.biases[-1]
        B = X.shape[0]
        if loss == "squared":
            diff = pred - Y
            value = 0.5 * float((diff * diff).sum()) / B
            dpred = diff / B
        elif loss == "pinball":
            u = Y - pred
            value = float((alpha * np.maximum(u, 0.0) + (1 - alpha) * np.maximum(-u, 0.0)).sum()) / B
            dpred = (-alpha * (u > 0.0) + (1 - alpha) * (u < 0.0)) / B
        else:
            raise ValueError(f"unknown loss {loss!r}")
        gw = [None] * len(self.weights)
        gb = [None] * len(self.biases)
        delta = dpred
        for layer in range(len(self.weights) - 1, -1, -1):
            gw[layer] = delta.T @ acts[layer]
            gb[layer] = delta.sum(axis=0)
            if layer > 0:
                delta = (delta @ self.weights[layer]) * (1.0 - acts[layer] ** 2)
        return value, gw, gb

    def train(self, X, Y, loss, alpha, lr, epochs, batch_size, seed):
        """Adam over seeded mini-batches; returns per-epoch mean batch loss."""
        shuffler = stream(seed, "mlp-shuffle")
        mw = [np.zeros_like(w) for w in self.weights]
        vw = [np.zeros_like(w) for w in self.weights]
        mb = [np.zeros_like(b) for b in self.biases]
        vb = [np.zeros_like(b) for b in self.biases]
        b1, b2, eps = 0.9, 0.999, 1e-8
        step = 0
        history = []
        T = X.shape[0]
        bs = min(batch_size, T)
        for _ in range(epochs):
            perm = shuffler.permutation(T)
            losses = []
            for lo in range(0, T, bs):
                idx = perm[lo : lo + bs]
                value, gw, gb = self.loss_and_grad(X[idx], Y[idx], loss, alpha)
                losses.append(value)
                step += 1
                corr = np.sqrt(1 - b2**step) / (1 - b1**step)
                for arrs, grads, ms, vs in (
                    (self.weights, gw, mw, vw),
                    (self.biases, gb, mb, vb),
                ):
                    for i, g in enumerate(grads):
                        ms[i] = b1 * ms[i] + (1 - b1) * g
                        vs[i] = b2 * vs[i] + (1 - b2) * g * g
                        arrs[i] -= lr * corr * ms[i] / (np.sqrt(vs[i]) + eps)
            history.append(float(np.mean(losses)))
        return history


class LinearModel:
    """Ridge regression with an (L2-penalized) intercept column."""

    kind = "linear"

    def __init__(self, weights: np.ndarray):
        self.weights = np.asarray(weights, dtype=np.float64)  # (n, d+1)

    @property
    def input_dim(self) -> int:
        return self.weights.shape[1] - 1

    @property
    def output_dim(self) -> int:
        return self.weights.shape[0]

    def predict_batch(self, Z: np.ndarray) -> np.ndarray:
        Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
        if Z.shape[1] != self.input_dim:
            raise DimensionMismatch("covariate length does not match model input")
        aug = np.hstack([Z, np.ones((Z.shape[0], 1))])
        return aug @ self.weights.T


class KernelRidgeModel:
    kind = "kernel-rbf"

    def __init__(self, Z_train, coef, sigma):
        self.Z_train = np.asarray(Z_train, dtype=np.float64)
        self.coef = np.asarray(coef, dtype=np.float64)  # (T, n)
        self.sigma = float(sigma)

    @property
    def input_dim(self) -> int:
        return self.Z_train.shape[1]

    @property
    def output_dim(self) -> int:
        return self.coef.shape[1]

    def predict_batch(self, Z: np.ndarray) -> np.ndarray:
        Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
        if Z.shape[1] != self.input_dim:
            raise DimensionMismatch("covariate length does not match model input")
        d2 = ((Z[:, None, :] - self.Z_train[None, :, :]) ** 2).sum(axis=2)
        K = np.exp(-d2 / (2.0 * self.sigma**2))
        return K @ self.coef


class MlpModel:
    kind = "mlp"

    def __init__(self, core: _MlpCore, x_scaler: _Scaler, y_scaler: _Scaler, training_loss=None):
        self.core = core
        self.x_scaler = x_scaler
        self.y_scaler = y_scaler
        self.training_loss = training_loss or []

    @property
    def input_dim(self) -> int:
        return self.core.sizes[0]

    @property
    def output_dim(self) -> int:
        return self.core.sizes[-1]

    def predict_batch(self, Z: np.ndarray) -> np.ndarray:
        Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
        if Z.shape[1] != self.input_dim:
            raise DimensionMismatch("covariate length does not match model input")
        return self.y_scaler.inverse(self.core.forward(self.x_scaler.transform(Z)))


Predictor = LinearModel | KernelRidgeModel | MlpModel


class QuantileModel:
    """Quantile regressor with predictions clamped at a positive floor."""

    def __init__(self, kind, alpha, floor, core, x_scaler, y_scaler, training_loss=None):
        self.kind = kind  # linear-pinball | mlp-pinball
        self.alpha = float(alpha)
        self.floor = float(floor)
        self.core = core
        self.x_scaler = x_scaler
        self.y_scaler = y_scaler
        self.training_loss = training_loss or []

    @property
    def input_dim(self) -> int:
        return self.core.sizes[0]

    @property
    def output_dim(self) -> int:
        return self.core.sizes[-1]

    def predict_batch(self, Z: np.ndarray) -> np.ndarray:
        Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
        if Z.shape[1] != self.input_dim:
            raise DimensionMismatch("covariate length does not match model input")
        raw = self.y_scaler.inverse(self.core.forward(self.x_scaler.transform(Z)))
        return np.maximum(raw, self.floor)

    def predict(self, z: np.ndarray) -> np.ndarray:
        return self.predict_batch(np.atleast_2d(z))[0]


def median_pairwise_distance(Z: np.ndarray, cap: int = 500) -> float:
    """Median nonzero pairwise Euclidean distance (subsampled above cap rows)."""
    Z = np.atleast_2d(Z)
    if Z.shape[0] > cap:
        idx = np.linspace(0, Z.shape[0] - 1, cap).astype(int)
        Z = Z[idx]
    d2 = ((Z[:, None, :] - Z[None, :, :]) ** 2).sum(axis=2)
    vals = np.sqrt(d2[np.triu_indices(Z.shape[0], k=1)])
    vals = vals[vals > 0]
    return float(np.median(vals)) if vals.size else 1.0


def fit_predictor(data: Dataset, config: PredictorConfig, seed: int) -> Predictor:
    """Fit a point predictor on the learning split."""
    config.validate()
    if data.size < 2:
        raise ConfigInvalid("need at least 2 samples to fit a predictor")
    Z, C = data.Z, data.C
    if config.kind == "linear":
        aug = np.hstack([Z, np.ones((Z.shape[0], 1))])
        gram = aug.T @ aug + config.ridge_lambda * np.eye(aug.shape[1])
        try:
            weights = np.linalg.solve(gram, aug.T @ C).T
        except np.linalg.LinAlgError as exc:
            raise SingularSystem("ridge normal equations are singular") from exc
        return LinearModel(weights)
    if config.kind == "kernel-rbf":
        sigma = config.rbf_sigma if config.rbf_sigma is not None else median_pairwise_distance(Z)
        d2 = ((Z[:, None, :] - Z[None, :, :]) ** 2).sum(axis=2)
        K = np.exp(-d2 / (2.0 * sigma**2))
        factor = cholesky_jittered(K + config.ridge_lambda * np.eye(K.shape[0]))
        from scipy.linalg import solve_triangular

        coef = solve_triangular(
            factor.lower.T, solve_triangular(factor.lower, C, lower=True), lower=False
        )
        return KernelRidgeModel(Z, coef, sigma)
    # mlp
    x_scaler = _Scaler(Z)
    y_scaler = _Scaler(C)
    core = _MlpCore((Z.shape[1], *config.hidden, C.shape[1]), seed)
    history = core.train(
        x_scaler.transform(Z),
        y_scaler.transform(C),
        "squared",
        0.5,
        config.learning_rate,
        config.epochs,
        config.batch_size,
        seed,
    )
    return MlpModel(core, x_scaler, y_scaler, history)


def predict(model, z: np.ndarray) -> np.ndarray:
    """Evaluate a fitted model on one covariate vector."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 1:
        raise DimensionMismatch("z must be a vector")
    return model.predict_batch(z[None, :])[0]


def predict_batch(model, Z: np.ndarray) -> np.ndarray:
    return model.predict_batch(Z)


def fit_quantile(
    Z: np.ndarray,
    targets: np.ndarray,
    alpha: float,
    config: QuantileConfig | None = None,
    seed: int = 0,
) -> QuantileModel:
    """Fit a pinball-loss quantile model at level alpha.

    The pinball loss rho_a(u) = a*u+ + (1-a)*(-u)+ is minimized by the
    empirical a-quantile, which is what makes the fitted model usable as a
    preliminary size model for the conformal adjustment.
    """
    if config is None:
        config = QuantileConfig()
    config.validate()
    if not 0.0 < alpha < 1.0:
        raise ConfigInvalid("alpha must be in (0, 1)")
    Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
    targets = np.asarray(targets, dtype=np.float64)
    if targets.ndim == 1:
        targets = targets[:, None]
    if Z.shape[0] != targets.shape[0]:
        raise DimensionMismatch("Z and targets must have the same number of rows")
    if not np.isfinite(targets).all():
        raise ConfigInvalid("targets must be finite")
    hidden = config.hidden if config.kind == "mlp-pinball" else ()
    x_scaler = _Scaler(Z)
    y_scaler = _Scaler(targets)
    core = _MlpCore((Z.shape[1], *hidden, targets.shape[1]), seed)
    history = core.train(
        x_scaler.transform(Z),
        y_scaler.transform(targets),
        "pinball",
        alpha,
        config.learning_rate,
        config.epochs,
        config.batch_size,
        seed,
    )
    return QuantileModel(config.kind, alpha, config.floor, core, x_scaler, y_scaler, history)


# ---------------------------------------------------------------------------
# versioned flat serialization (documented in README)

_FORMAT = "ptcopt-model-v1"


def _scaler_record(s: _Scaler):
    return {"mean": s.mean.tolist(), "sd": s.sd.tolist()}


def _scaler_from(rec) -> _Scaler:
    s = _Scaler.__new__(_Scaler)
    s.mean = np.asarray(rec["mean"], dtype=np.float64)
    s.sd = np.asarray(rec["sd"], dtype=np.float64)
    return s


def _core_record(core: _MlpCore):
    return {
        "sizes": list(core.sizes),
        "weights": [w.tolist() for w in core.weights],
        "biases": [b.tolist() for b in core.biases],
    }


def _core_from(rec) -> _MlpCore:
    core = _MlpCore.__new__(_MlpCore)
    core.sizes = tuple(rec["sizes"])
    core.weights = [np.asarray(w, dtype=np.float64) for w in rec["weights"]]
    core.biases = [np.asarray(b, dtype=np.float64) for b in rec["biases"]]
    return core


def model_record(model) -> dict:
    """Flat dict record for any fitted model (kind tag, dims, arrays)."""
    rec = {"format": _FORMAT, "kind": model.kind,
           "input_dim": model.input_dim, "output_dim": model.output_dim}
    if isinstance(model, LinearModel):
        rec["arrays"] = {"weights": model.weights.tolist()}
    elif isinstance(model, KernelRidgeModel):
        rec["arrays"] = {"Z_train": model.Z_train.tolist(), "coef": model.coef.tolist()}
        rec["sigma"] = model.sigma
    elif isinstance(model, MlpModel):
        rec["arrays"] = {
            "core": _core_record(model.core),
            "x_scaler": _scaler_record(model.x_scaler),
            "y_scaler": _scaler_record(model.y_scaler),
        }
    elif isinstance(model, QuantileModel):
        rec["alpha"] = model.alpha
        rec["floor"] = model.floor
        rec["arrays"] = {
            "core": _core_record(model.core),
            "x_scaler": _scaler_record(model.x_scaler),
            "y_scaler": _scaler_record(model.y_scaler),
        }
    else:
        raise ConfigInvalid(f"cannot serialize model of type {type(model).__name__}")
    return rec


def model_from_record(rec: dict):
    if rec.get("format") != _FORMAT:
        raise ConfigInvalid(f"unsupported model record format {rec.get('format')!r}")
    kind = rec["kind"]
    arrays = rec["arrays"]
    if kind == "linear":
        return LinearModel(np.asarray(arrays["weights"], dtype=np.float64))
    if kind == "kernel-rbf":
        return KernelRidgeModel(arrays["Z_train"], arrays["coef"], rec["sigma"])
    if kind == "mlp":
        return MlpModel(
            _core_from(arrays["core"]),
            _scaler_from(arrays["x_scaler"]),
            _scaler_from(arrays["y_scaler"]),
        )
    if kind in ("linear-pinball", "mlp-pinball"):
        return QuantileModel(
            kind,
            rec["alpha"],
            rec["floor"],
            _core_from(arrays["core"]),
            _scaler_from(arrays["x_scaler"]),
            _scaler_from(arrays["y_scaler"]),
        )
    raise ConfigInvalid(f"unknown model kind {kind!r}")


def save_model(model, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_record(model), fh)


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        return model_from_record(json.load(fh))

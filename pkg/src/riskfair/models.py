"""Logistic regression and a one-hidden-layer MLP, trained by momentum SGD."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

from ._backend import kernels
from .preprocess import EncodingSchema, FeatureMatrix

EPS = np.finfo(np.float64).eps


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    batch_size: int = 32
    max_epochs: int = 200
    patience: int = 20
    validation_fraction: float = 0.15
    seed: int = 0
    l2_penalty: float = 1e-4
    momentum: float = 0.9
    hidden_units: int = 100

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 <= self.validation_fraction <= 0.5:
            raise ValueError("validation_fraction must lie in [0, 0.5]")
        if self.max_epochs < 0 or self.patience < 1:
            raise ValueError("max_epochs must be >= 0 and patience >= 1")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.hidden_units < 1:
            raise ValueError("hidden_units must be >= 1")


@dataclass(frozen=True)
class LogisticModel:
    weights: np.ndarray
    bias: float
    history: tuple[float, ...] = field(default=(), compare=False)

    family = "logistic"

    @property
    def n_features(self) -> int:
        return self.weights.shape[0]

    def decision(self, X: np.ndarray) -> np.ndarray:
        return X @ self.weights + self.bias


@dataclass(frozen=True)
class MlpModel:
    hidden_weights: np.ndarray  # (n_features, hidden_units)
    hidden_bias: np.ndarray
    output_weights: np.ndarray
    output_bias: float
    activation: str = "relu"
    history: tuple[float, ...] = field(default=(), compare=False)

    family = "mlp"

    @property
    def n_features(self) -> int:
        return self.hidden_weights.shape[0]

    @property
    def hidden_units(self) -> int:
        return self.hidden_weights.shape[1]

    def decision(self, X: np.ndarray) -> np.ndarray:
        a = np.maximum(X @ self.hidden_weights + self.hidden_bias, 0.0)
        return a @ self.output_weights + self.output_bias


# -- losses and gradients -------------------------------------------------------


def logistic_loss_grad(w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray, l2: float):
    """Mean cross-entropy plus ``0.5*l2*|w|^2``; returns ``(loss, grad_w, grad_b)``."""
    o = X @ w + b
    loss = np.mean(np.maximum(o, 0.0) + np.log1p(np.exp(-np.abs(o))) - y * o) + 0.5 * l2 * np.dot(w, w)
    d = (expit(o) - y) / X.shape[0]
    return float(loss), X.T @ d + l2 * w, float(d.sum())


def mlp_loss_grad(model: MlpModel, X: np.ndarray, y: np.ndarray, l2: float):
    """Loss and gradients ``(loss, gW1, gb1, gw2, gb2)`` at the model's parameters."""
    return kernels.mlp_loss_grad(model.hidden_weights, model.hidden_bias, model.output_weights,
                                 model.output_bias, X, y, l2)


# -- training -----------------------------------------------------------------------


def _check_trainable(matrix: FeatureMatrix) -> None:
    if len(matrix) == 0:
        raise TrainingError("training matrix is empty")
    classes = np.unique(matrix.y)
    if classes.size < 2:
        raise TrainingError(f"training labels contain a single class ({classes.tolist()})")


def _split(n: int, cfg: TrainConfig, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    n_val = int(math.floor(cfg.validation_fraction * n))
    if n_val == 0:
        return np.arange(n), np.arange(0)
    perm = rng.permutation(n)
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def _run(params: list[np.ndarray], epoch_fn, loss_fn, matrix: FeatureMatrix, cfg: TrainConfig,
         rng: np.random.Generator):
    """Shared epoch loop with early stopping on validation loss.

    ``params`` are updated in place; the best-validation snapshot is returned
    along with per-epoch training losses. ``epoch_fn`` may return its own
    estimate of the training loss; otherwise ``loss_fn`` is evaluated.
    """
    X, y = matrix.X, matrix.y
    tr, va = _split(len(matrix), cfg, rng)
    velocity = [np.zeros_like(p) for p in params]
    best = [p.copy() for p in params]
    best_val = math.inf
    since_best = 0
    history = []
    for _ in range(cfg.max_epochs):
        order = tr[rng.permutation(tr.size)]
        train_loss = epoch_fn(params, velocity, X, y, order)
        if train_loss is None:
            train_loss = loss_fn(params, X[tr], y[tr])
        if not math.isfinite(train_loss):
            raise TrainingError("training diverged (non-finite loss)")
        history.append(train_loss)
        if va.size:
            val_loss = loss_fn(params, X[va], y[va])
            if val_loss < best_val:
                best_val = val_loss
                best = [p.copy() for p in params]
                since_best = 0
            else:
                since_best += 1
                if since_best >= cfg.patience:
                    break
    if not va.size or not history:
        best = [p.copy() for p in params]
    return best, tuple(history)


def train_logistic(matrix: FeatureMatrix, config: TrainConfig = TrainConfig()) -> LogisticModel:
    """L2-regularized logistic regression by minibatch gradient descent."""
    _check_trainable(matrix)
    rng = np.random.default_rng(config.seed)
    params = [np.zeros(matrix.X.shape[1]), np.zeros(1)]
    lr, mom, l2, bs = config.learning_rate, config.momentum, config.l2_penalty, config.batch_size

    def epoch(p, v, X, y, order):
        for r0 in range(0, order.size, bs):
            rows = order[r0:r0 + bs]
            _, gw, gb = logistic_loss_grad(p[0], p[1][0], X[rows], y[rows], l2)
            v[0] *= mom
            v[0] -= lr * gw
            p[0] += v[0]
            v[1][0] = mom * v[1][0] - lr * gb
            p[1][0] += v[1][0]

    def loss(p, X, y):
        return logistic_loss_grad(p[0], p[1][0], X, y, l2)[0]

    (w, b), hist = _run(params, epoch, loss, matrix, config, rng)
    return LogisticModel(w, float(b[0]), hist)


def init_mlp(n_features: int, hidden_units: int, rng: np.random.Generator) -> MlpModel:
    """Uniform init scaled by fan-in; biases start at zero."""
    lim1 = 1.0 / math.sqrt(n_features)
    lim2 = 1.0 / math.sqrt(hidden_units)
    W1 = rng.uniform(-lim1, lim1, size=(n_features, hidden_units))
    w2 = rng.uniform(-lim2, lim2, size=hidden_units)
    return MlpModel(W1, np.zeros(hidden_units), w2, 0.0)


def train_mlp(matrix: FeatureMatrix, config: TrainConfig = TrainConfig()) -> MlpModel:
    """ReLU hidden layer, sigmoid output, cross-entropy, early stopping."""
    _check_trainable(matrix)
    rng = np.random.default_rng(config.seed)
    init = init_mlp(matrix.X.shape[1], config.hidden_units, rng)
    params = [np.ascontiguousarray(init.hidden_weights), init.hidden_bias.copy(),
              init.output_weights.copy(), np.zeros(1)]
    lr, mom, l2, bs = config.learning_rate, config.momentum, config.l2_penalty, config.batch_size

    def epoch(p, v, X, y, order):
        # mean of minibatch losses seen during the pass
        return kernels.mlp_sgd_epoch(p[0], p[1], p[2], p[3], v[0], v[1], v[2], v[3],
                              X, y, order.astype(np.int64), bs, lr, mom, l2)

    def loss(p, X, y):
        return kernels.mlp_loss_grad(p[0], p[1], p[2], p[3][0], X, y, l2)[0]

    (W1, b1, w2, b2), hist = _run(params, epoch, loss, matrix, config, rng)
    return MlpModel(W1, b1, w2, float(b2[0]), history=hist)


def predict_proba(model: LogisticModel | MlpModel, X: np.ndarray | FeatureMatrix) -> np.ndarray:
    """Scores strictly inside (0, 1)."""
    if isinstance(X, FeatureMatrix):
        X = X.X
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise ValueError(f"input has shape {X.shape}, model expects {model.n_features} features")
    return np.clip(expit(model.decision(X)), EPS, 1.0 - EPS)


# -- serialization --------------------------------------------------------------


def model_to_dict(model: LogisticModel | MlpModel) -> dict:
    if isinstance(model, LogisticModel):
        return {"family": "logistic", "n_features": model.n_features,
                "weights": model.weights.tolist(), "bias": model.bias}
    return {"family": "mlp", "n_features": model.n_features, "hidden_units": model.hidden_units,
            "activation": model.activation,
            "hidden_weights": model.hidden_weights.ravel().tolist(),
            "hidden_bias": model.hidden_bias.tolist(),
            "output_weights": model.output_weights.tolist(),
            "output_bias": model.output_bias}


def model_from_dict(d: dict) -> LogisticModel | MlpModel:
    fam = d.get("family")
    if fam == "logistic":
        return LogisticModel(np.asarray(d["weights"], dtype=float), float(d["bias"]))
    if fam == "mlp":
        shape = (int(d["n_features"]), int(d["hidden_units"]))
        return MlpModel(np.asarray(d["hidden_weights"], dtype=float).reshape(shape),
                        np.asarray(d["hidden_bias"], dtype=float),
                        np.asarray(d["output_weights"], dtype=float),
                        float(d["output_bias"]), d.get("activation", "relu"))
    raise ValueError(f"unknown model family {fam!r}")


def save_model(path: str | Path, model: LogisticModel | MlpModel, encoding: EncodingSchema | None = None,
               **extra) -> None:
    """Write a self-describing JSON document (model, encoding and any extras)."""
    doc = {"model": model_to_dict(model)}
    if encoding is not None:
        doc["encoding"] = encoding.to_dict()
    doc.update(extra)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_model(path: str | Path) -> tuple[LogisticModel | MlpModel, dict]:
    with open(path) as fh:
        doc = json.load(fh)
    return model_from_dict(doc["model"]), doc

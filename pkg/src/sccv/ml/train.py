"""Minibatch training loops for the sequence models and the baseline.

Everything is deterministic given the config seed: shuffles come from a
generator keyed on (seed, epoch), and the numerics are plain float64
numpy, so retraining with the same inputs reproduces the same weights.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .metrics import MacroMetrics, evaluate_macro, majority_vote
from .model import (ModelConfig, ModelParams, NumericsError, forward_batch,
                    init_model, loss_and_gradients, softmax)
from .optim import AdamState, adam_step

log = logging.getLogger("sccv.ml.train")

EVAL_CHUNK = 256


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float | None = None
    val_metrics: MacroMetrics | None = None


@dataclass
class TrainResult:
    params: ModelParams
    config: ModelConfig
    history: list[EpochStats] = field(default_factory=list)
    best_epoch: int = -1


def _as_xy(data) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(data, tuple) and len(data) == 2:
        X, y = data
    else:
        X, y = data.X, data.y
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 3:
        raise ValueError(f"window tensor must be (N, W, D), got shape {X.shape}")
    if y.shape != (X.shape[0],):
        raise ValueError("labels must be one per window")
    return X, y


def predict_windows(params: ModelParams, config: ModelConfig,
                    X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Argmax class and confidence per window, evaluated in chunks."""
    X = np.asarray(X, dtype=np.float64)
    preds = np.empty(X.shape[0], dtype=np.int64)
    confs = np.empty(X.shape[0], dtype=np.float64)
    for lo in range(0, X.shape[0], EVAL_CHUNK):
        probs = forward_batch(params, config, X[lo:lo + EVAL_CHUNK])
        preds[lo:lo + EVAL_CHUNK] = probs.argmax(axis=1)
        confs[lo:lo + EVAL_CHUNK] = probs.max(axis=1)
    return preds, confs


def _val_stats(params: ModelParams, config: ModelConfig, X: np.ndarray,
               y: np.ndarray) -> tuple[float, MacroMetrics]:
    total = 0.0
    preds = np.empty(X.shape[0], dtype=np.int64)
    for lo in range(0, X.shape[0], EVAL_CHUNK):
        probs = forward_batch(params, config, X[lo:lo + EVAL_CHUNK])
        chunk_y = y[lo:lo + EVAL_CHUNK]
        p = np.clip(probs[np.arange(chunk_y.size), chunk_y], 1e-300, None)
        total += -np.log(p).sum()
        preds[lo:lo + EVAL_CHUNK] = probs.argmax(axis=1)
    loss = total / X.shape[0] + config.l2_fc * float((params.fc_w ** 2).sum())
    return loss, evaluate_macro(y, preds, config.C)


def _epoch_order(seed: int, epoch: int, n: int) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(epoch)]))
    return rng.permutation(n)


def train(config: ModelConfig, train_data, val_data=None,
          init: ModelParams | None = None) -> TrainResult:
    """Train one sequence classifier with Adam.

    ``train_data``/``val_data`` are (X, y) pairs or objects with .X/.y,
    X shaped (N, W, D) with L1-normalized rows.  When a validation set is
    given, the returned params are the snapshot from the epoch with the
    highest validation macro recall (earliest on ties); otherwise the
    final epoch wins.  Non-finite losses or gradients raise NumericsError
    rather than silently continuing.
    """
    X, y = _as_xy(train_data)
    if X.shape[0] == 0:
        raise ValueError("empty training set")
    if X.shape[2] != config.D:
        raise ValueError(f"training rows have width {X.shape[2]}, config.D={config.D}")
    if y.min() < 0 or y.max() >= config.C:
        raise ValueError("training labels out of range")
    val = None if val_data is None else _as_xy(val_data)

    params = init.copy() if init is not None else init_model(config)
    state = AdamState.init(params)
    result = TrainResult(params=params, config=config)
    best_key: tuple[float, float] | None = None
    n = X.shape[0]
    bs = max(1, int(config.batch_size))
    for epoch in range(config.epochs):
        order = _epoch_order(config.seed, epoch, n)
        losses = []
        for lo in range(0, n, bs):
            idx = order[lo:lo + bs]
            loss, grads = loss_and_gradients(params, config, (X[idx], y[idx]))
            params, state = adam_step(params, grads, state, config)
            losses.append(loss)
        params.check_finite("params")
        stats = EpochStats(epoch=epoch, train_loss=float(np.mean(losses)))
        if val is not None:
            stats.val_loss, stats.val_metrics = _val_stats(params, config, *val)
            key = (stats.val_metrics.macro_recall, -stats.val_loss)
            if best_key is None or key > best_key:
                best_key = key
                result.params = params.copy()
                result.best_epoch = epoch
            log.info("epoch %d train_loss %.4f val_loss %.4f val_recall %.4f",
                     epoch, stats.train_loss, stats.val_loss,
                     stats.val_metrics.macro_recall)
        else:
            result.params = params
            result.best_epoch = epoch
            log.info("epoch %d train_loss %.4f", epoch, stats.train_loss)
        result.history.append(stats)
    return result


@dataclass
class BaselineModel:
    """Multinomial logistic regression over single normalized vectors."""

    W: np.ndarray  # (C, D)
    b: np.ndarray  # (C,)

    @property
    def num_classes(self) -> int:
        return self.W.shape[0]

    def predict_rows(self, rows: np.ndarray) -> np.ndarray:
        """Argmax class per row; rows shaped (N, D)."""
        rows = np.asarray(rows, dtype=np.float64)
        return np.argmax(rows @ self.W.T + self.b, axis=1).astype(np.int64)

    def predict_window(self, rows: np.ndarray) -> int:
        """Window label = majority vote over the per-row predictions."""
        return majority_vote(self.predict_rows(rows), self.num_classes)

    def predict_windows(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        B, T, D = X.shape
        flat = self.predict_rows(X.reshape(B * T, D)).reshape(B, T)
        counts = np.zeros((B, self.num_classes), dtype=np.int64)
        for c in range(self.num_classes):
            counts[:, c] = (flat == c).sum(axis=1)
        return counts.argmax(axis=1).astype(np.int64)


def train_baseline(rows: np.ndarray, labels: np.ndarray, num_classes: int,
                   epochs: int = 40, batch_size: int = 256, lr: float = 0.05,
                   l2: float = 1e-4, seed: int = 0) -> BaselineModel:
    """Fit the logistic baseline on individual rows with Adam.

    Weights start at zero, so the first prediction is the uniform
    distribution and training is deterministic in the seed.
    """
    X = np.asarray(rows, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if X.ndim != 2:
        raise ValueError("baseline expects a flat (N, D) row matrix")
    if y.shape != (X.shape[0],):
        raise ValueError("labels must be one per row")
    n, D = X.shape
    C = int(num_classes)
    W = np.zeros((C, D))
    b = np.zeros(C)
    mW = np.zeros_like(W); vW = np.zeros_like(W)
    mb = np.zeros_like(b); vb = np.zeros_like(b)
    b1, b2, eps = 0.9, 0.999, 1e-8
    t = 0
    for epoch in range(epochs):
        order = _epoch_order(seed, epoch, n)
        for lo in range(0, n, batch_size):
            idx = order[lo:lo + batch_size]
            Xb, yb = X[idx], y[idx]
            probs = softmax(Xb @ W.T + b)
            probs[np.arange(yb.size), yb] -= 1.0
            probs /= yb.size
            gW = probs.T @ Xb + 2.0 * l2 * W
            gb = probs.sum(axis=0)
            t += 1
            mW = b1 * mW + (1 - b1) * gW; vW = b2 * vW + (1 - b2) * gW * gW
            mb = b1 * mb + (1 - b1) * gb; vb = b2 * vb + (1 - b2) * gb * gb
            W = W - lr * (mW / (1 - b1 ** t)) / (np.sqrt(vW / (1 - b2 ** t)) + eps)
            b = b - lr * (mb / (1 - b1 ** t)) / (np.sqrt(vb / (1 - b2 ** t)) + eps)
        if not (np.isfinite(W).all() and np.isfinite(b).all()):
            raise NumericsError("non-finite baseline weights after epoch %d" % epoch)
    return BaselineModel(W=W, b=b)


__all__ = ["EpochStats", "TrainResult", "train", "predict_windows",
           "BaselineModel", "train_baseline"]

"""Plain minibatch SGD on cross-entropy."""
from __future__ import annotations

import logging

import numpy as np

from interlab.errors import TrainingError
from interlab.nnengine.model import Model, forward_batch, param_gradients

log = logging.getLogger(__name__)


def accuracy(model: Model, X, y) -> float:
    if len(y) == 0:
        return float("nan")
    return float(np.mean(forward_batch(model, X).argmax(axis=1) == np.asarray(y)))


def train(model: Model, X, y, epochs: int, lr: float, seed: int, batch_size: int = 32) -> Model:
    """Return a trained copy of ``model``; identical seeds give identical weights."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.shape[0] == 0:
        raise ValueError("training data is empty")
    rng = np.random.default_rng(seed)
    params = [(d.weight.copy(), d.bias.copy()) for d in model.dense_layers()]
    for epoch in range(epochs):
        order = rng.permutation(X.shape[0])
        for start in range(0, X.shape[0], batch_size):
            idx = order[start:start + batch_size]
            with np.errstate(over="ignore", invalid="ignore"):
                value, grads = param_gradients(model, X[idx], y[idx], "ce")
            if not np.isfinite(value):
                raise TrainingError("loss diverged", epoch)
            params = [(w - lr * dw, b - lr * db) for (w, b), (dw, db) in zip(params, grads)]
            if not all(np.all(np.isfinite(w)) and np.all(np.isfinite(b)) for w, b in params):
                raise TrainingError("weights became non-finite", epoch)
            model = model.with_params(params)
        log.debug("epoch %d train acc %.3f", epoch, accuracy(model, X, y))
    return model

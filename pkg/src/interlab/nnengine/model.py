"""Small dense classifiers with hand-written reverse-mode gradients.

Everything is float64 and operates on numpy arrays. A model is an immutable
sequence of layers; ``forward`` returns logits (the scores before softmax).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Literal, Sequence, Union

import numpy as np

from interlab.errors import LabelError, ShapeError, UnsupportedActivationError

LossKind = Literal["ce", "margin"]
LOSS_KINDS = ("ce", "margin")

DEFAULT_BETA = 10.0


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=np.float64, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Dense:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)

    def __post_init__(self):
        w, b = _frozen(self.weight), _frozen(self.bias)
        if w.ndim != 2 or b.shape != (w.shape[0],):
            raise ShapeError(f"dense layer has weight {w.shape} and bias {b.shape}")
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bias", b)

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]


@dataclass(frozen=True)
class Activation:
    kind: Literal["relu", "softplus"] = "softplus"
    beta: float = DEFAULT_BETA

    def __post_init__(self):
        if self.kind not in ("relu", "softplus"):
            raise UnsupportedActivationError(f"unknown activation {self.kind!r}")
        if self.kind == "softplus" and not self.beta > 0:
            raise ValueError("softplus beta must be positive")


@dataclass(frozen=True, eq=False)
class Residual:
    """Identity skip around ``layers``: out = x + f(x)."""

    layers: tuple

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))


Layer = Union[Dense, Activation, Residual]


def _io_dims(layers: Sequence[Layer], dim: int) -> int:
    for layer in layers:
        if isinstance(layer, Dense):
            if layer.in_dim != dim:
                raise ShapeError(f"dense layer expects {layer.in_dim} inputs, got {dim}")
            dim = layer.out_dim
        elif isinstance(layer, Residual):
            inner = _io_dims(layer.layers, dim)
            if inner != dim:
                raise ShapeError(f"residual block maps {dim} -> {inner}; skip needs equal dims")
    return dim


@dataclass(frozen=True, eq=False)
class Model:
    layers: tuple
    input_dim: int
    num_classes: int
    name: str = field(default="model")

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if self.input_dim < 1 or self.num_classes < 1:
            raise ShapeError("input_dim and num_classes must be positive")
        out = _io_dims(self.layers, self.input_dim)
        if out != self.num_classes:
            raise ShapeError(f"model produces {out} outputs, declared {self.num_classes}")

    def dense_layers(self) -> list[Dense]:
        return list(_iter_dense(self.layers))

    def activations(self) -> list[Activation]:
        return list(_iter_act(self.layers))

    def with_params(self, params: Sequence[tuple[np.ndarray, np.ndarray]]) -> "Model":
        """Copy of the model with dense weights replaced in traversal order."""
        it = iter(params)
        layers = _rebuild(self.layers, it)
        if next(it, None) is not None:
            raise ShapeError("too many parameter pairs")
        return Model(layers, self.input_dim, self.num_classes, self.name)


def _iter_dense(layers):
    for layer in layers:
        if isinstance(layer, Dense):
            yield layer
        elif isinstance(layer, Residual):
            yield from _iter_dense(layer.layers)


def _iter_act(layers):
    for layer in layers:
        if isinstance(layer, Activation):
            yield layer
        elif isinstance(layer, Residual):
            yield from _iter_act(layer.layers)


def _rebuild(layers, it):
    out = []
    for layer in layers:
        if isinstance(layer, Dense):
            w, b = next(it)
            out.append(Dense(w, b))
        elif isinstance(layer, Residual):
            out.append(Residual(_rebuild(layer.layers, it)))
        else:
            out.append(layer)
    return tuple(out)


# ---------------------------------------------------------------------------
# forward / backward

def _act_forward(act: Activation, z: np.ndarray) -> np.ndarray:
    if act.kind == "relu":
        return np.maximum(z, 0.0)
    return np.logaddexp(0.0, act.beta * z) / act.beta


def _act_deriv(act: Activation, z: np.ndarray) -> np.ndarray:
    if act.kind == "relu":
        # derivative at exactly 0 is taken as 0
        return (z > 0).astype(np.float64)
    # d/dz softplus_beta(z) = sigmoid(beta z)
    return 0.5 * (1.0 + np.tanh(0.5 * act.beta * z))


def _forward_layers(layers, X, cache):
    for layer in layers:
        if isinstance(layer, Dense):
            cache.append(X)
            X = X @ layer.weight.T + layer.bias
        elif isinstance(layer, Activation):
            cache.append(X)
            X = _act_forward(layer, X)
        else:
            sub: list = []
            X = X + _forward_layers(layer.layers, X, sub)
            cache.append(sub)
    return X


def _backward_layers(layers, cache, dX, grads):
    # grads are collected in reverse traversal order
    for layer, saved in zip(reversed(layers), reversed(cache)):
        if isinstance(layer, Dense):
            if grads is not None:
                grads.append((dX.T @ saved, dX.sum(axis=0)))
            dX = dX @ layer.weight
        elif isinstance(layer, Activation):
            dX = dX * _act_deriv(layer, saved)
        else:
            dX = dX + _backward_layers(layer.layers, saved, dX, grads)
    return dX


def _check_batch(model: Model, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.input_dim:
        raise ShapeError(f"expected inputs of shape (B, {model.input_dim}), got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("inputs contain NaN or Inf")
    return X


def _check_input(model: Model, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.input_dim,):
        raise ShapeError(f"expected input of shape ({model.input_dim},), got {x.shape}")
    return x


def forward_batch(model: Model, X) -> np.ndarray:
    X = _check_batch(model, X)
    return _forward_layers(model.layers, X, [])


def forward(model: Model, x) -> np.ndarray:
    """Logits h(x) for a single input vector."""
    x = _check_input(model, x)
    return forward_batch(model, x[None, :])[0]


def backward_batch(model: Model, X, dlogits) -> np.ndarray:
    """Vector-Jacobian product: d(sum dlogits * h(X)) / dX, row-wise."""
    X = _check_batch(model, X)
    cache: list = []
    _forward_layers(model.layers, X, cache)
    return _backward_layers(model.layers, cache, np.asarray(dlogits, dtype=np.float64), None)


# ---------------------------------------------------------------------------
# losses

def _check_labels(y, num_classes: int, size: int) -> np.ndarray:
    y = np.broadcast_to(np.asarray(y), (size,))
    if not np.issubdtype(y.dtype, np.integer):
        if not np.all(np.equal(np.mod(y, 1), 0)):
            raise LabelError(f"labels must be integers, got {y}")
        y = y.astype(np.int64)
    if np.any(y < 0) or np.any(y >= num_classes):
        raise LabelError(f"label out of range [0, {num_classes}): {y}")
    return y


def margin_from_logits(logits: np.ndarray, y) -> np.ndarray:
    """max_{k != y} h_k - h_y, row-wise for a (B, C) array."""
    logits = np.atleast_2d(logits)
    rows = np.arange(logits.shape[0])
    y = _check_labels(y, logits.shape[1], logits.shape[0])
    others = logits.copy()
    others[rows, y] = -np.inf
    return others.max(axis=1) - logits[rows, y]


def _margin_dlogits(logits: np.ndarray, y: np.ndarray) -> np.ndarray:
    rows = np.arange(logits.shape[0])
    others = logits.copy()
    others[rows, y] = -np.inf
    best = others.argmax(axis=1)
    d = np.zeros_like(logits)
    d[rows, best] = 1.0
    d[rows, y] -= 1.0
    return d


def _ce(logits: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    rows = np.arange(logits.shape[0])
    shifted = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    value = lse - shifted[rows, y]
    probs = np.exp(shifted - lse[:, None])
    probs[rows, y] -= 1.0
    return value, probs


def loss_and_dlogits(logits: np.ndarray, y, kind: LossKind) -> tuple[np.ndarray, np.ndarray]:
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    y = _check_labels(y, logits.shape[1], logits.shape[0])
    if kind == "ce":
        return _ce(logits, y)
    if kind == "margin":
        if logits.shape[1] < 2:
            raise LabelError("margin loss needs at least two classes")
        return margin_from_logits(logits, y), _margin_dlogits(logits, y)
    raise ValueError(f"unknown loss kind {kind!r}")


def loss_batch(model: Model, X, y, kind: LossKind = "ce") -> np.ndarray:
    return loss_and_dlogits(forward_batch(model, X), y, kind)[0]


def loss(model: Model, x, y: int, kind: LossKind = "ce") -> float:
    x = _check_input(model, x)
    return float(loss_batch(model, x[None, :], y, kind)[0])


def input_gradient_batch(model: Model, X, y, kind: LossKind = "ce") -> tuple[np.ndarray, np.ndarray]:
    """Per-row loss values and their gradients with respect to the rows of X."""
    X = _check_batch(model, X)
    cache: list = []
    logits = _forward_layers(model.layers, X, cache)
    values, dlogits = loss_and_dlogits(logits, y, kind)
    return values, _backward_layers(model.layers, cache, dlogits, None)


def input_gradient(model: Model, x, y: int, kind: LossKind = "ce") -> np.ndarray:
    x = _check_input(model, x)
    return input_gradient_batch(model, x[None, :], y, kind)[1][0]


def param_gradients(model: Model, X, y, kind: LossKind = "ce") -> tuple[float, list]:
    """Mean loss over the batch and (dW, db) per dense layer in traversal order."""
    X = _check_batch(model, X)
    cache: list = []
    logits = _forward_layers(model.layers, X, cache)
    values, dlogits = loss_and_dlogits(logits, y, kind)
    grads: list = []
    _backward_layers(model.layers, cache, dlogits / X.shape[0], grads)
    return float(values.mean()), grads[::-1]


# ---------------------------------------------------------------------------
# second order

def hessian_fd(grad_fn: Callable[[np.ndarray], np.ndarray], x, pairs: Iterable[tuple[int, int]],
               step: float = 1e-4) -> list[float]:
    """H_ab by central differences of an analytic gradient along coordinate b."""
    x = np.asarray(x, dtype=np.float64)
    columns: dict[int, np.ndarray] = {}
    out = []
    for a, b in pairs:
        if b not in columns:
            e = np.zeros_like(x)
            e[b] = step
            columns[b] = (grad_fn(x + e) - grad_fn(x - e)) / (2.0 * step)
        out.append(float(columns[b][a]))
    return out


def _require_smooth(model: Model):
    if any(act.kind == "relu" for act in model.activations()):
        raise UnsupportedActivationError(
            "second-order probes need a smooth activation; rebuild the model with softplus")


def hessian_probe(model: Model, x, y: int, kind: LossKind = "margin",
                  pairs: Iterable[tuple[int, int]] = (), step: float = 1e-4) -> list[float]:
    _require_smooth(model)
    x = _check_input(model, x)
    return hessian_fd(lambda z: input_gradient(model, z, y, kind), x, pairs, step)


def full_hessian(model: Model, x, y: int, kind: LossKind = "margin", step: float = 1e-4) -> np.ndarray:
    """Dense n x n Hessian of the loss in the input, symmetrised."""
    _require_smooth(model)
    x = _check_input(model, x)
    n = x.size
    E = np.eye(n) * step
    _, gp = input_gradient_batch(model, x + E, np.full(n, y), kind)
    _, gm = input_gradient_batch(model, x - E, np.full(n, y), kind)
    H = ((gp - gm) / (2.0 * step)).T  # column b holds d grad / d x_b
    return 0.5 * (H + H.T)


# ---------------------------------------------------------------------------
# constructors

def _dense_init(rng: np.random.Generator, n_in: int, n_out: int) -> Dense:
    bound = np.sqrt(6.0 / (n_in + n_out))
    return Dense(rng.uniform(-bound, bound, size=(n_out, n_in)), np.zeros(n_out))


def mlp(sizes: Sequence[int], activation: str = "softplus", beta: float = DEFAULT_BETA,
        seed: int = 0, name: str = "mlp") -> Model:
    """Fully connected net with ``sizes = [n_in, h1, ..., C]``."""
    if len(sizes) < 2:
        raise ShapeError("need at least input and output sizes")
    rng = np.random.default_rng(seed)
    layers: list[Layer] = []
    for k, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        layers.append(_dense_init(rng, a, b))
        if k < len(sizes) - 2:
            layers.append(Activation(activation, beta))
    return Model(tuple(layers), sizes[0], sizes[-1], name)


def residual_mlp(input_dim: int, width: int, num_classes: int, blocks: int = 2,
                 activation: str = "softplus", beta: float = DEFAULT_BETA, seed: int = 0,
                 name: str = "resmlp") -> Model:
    rng = np.random.default_rng(seed)
    layers: list[Layer] = [_dense_init(rng, input_dim, width), Activation(activation, beta)]
    for _ in range(blocks):
        inner = (_dense_init(rng, width, width), Activation(activation, beta))
        # damp the residual branch so depth does not blow up activations
        d = inner[0]
        inner = (Dense(d.weight * 0.5, d.bias), inner[1])
        layers.append(Residual(inner))
    layers.append(_dense_init(rng, width, num_classes))
    return Model(tuple(layers), input_dim, num_classes, name)


def linear(weight, bias=None, name: str = "linear") -> Model:
    weight = np.asarray(weight, dtype=np.float64)
    bias = np.zeros(weight.shape[0]) if bias is None else bias
    return Model((Dense(weight, bias),), weight.shape[1], weight.shape[0], name)

"""Multilayer perceptron with ReLU hidden layers and hand-written backprop.

All parameters live in one flat float64 buffer; each layer's ``W`` (shape
``(fan_in, fan_out)``) and ``b`` (shape ``(1, fan_out)``) are views into it,
in the order W0, b0, W1, b1, ... with row-major element order.  Optimizers
update ``params.flat`` in place and the layer views follow automatically.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, UsageError
from .numeric import Pcg32, rand_normal


def _layer_views(flat: np.ndarray, sizes: tuple[int, ...]):
    layers = []
    offset = 0
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        W = flat[offset : offset + fan_in * fan_out].reshape(fan_in, fan_out)
        offset += fan_in * fan_out
        b = flat[offset : offset + fan_out].reshape(1, fan_out)
        offset += fan_out
        layers.append((W, b))
    return layers


def param_count(sizes) -> int:
    sizes = tuple(int(s) for s in sizes)
    return sum(i * o + o for i, o in zip(sizes[:-1], sizes[1:]))


class MLPParams:
    """Layer weights and biases backed by a single flat vector."""

    def __init__(self, sizes, flat=None):
        sizes = tuple(int(s) for s in sizes)
        if len(sizes) < 2 or min(sizes) < 1:
            raise DimensionError(f"need at least two positive layer sizes, got {sizes}")
        n = param_count(sizes)
        if flat is None:
            flat = np.zeros(n)
        else:
            flat = np.array(flat, dtype=np.float64).ravel()
            if flat.size != n:
                raise DimensionError(f"{sizes} needs {n} values, got {flat.size}")
        self.sizes = sizes
        self.flat = flat
        self.layers = _layer_views(flat, sizes)

    @property
    def num_classes(self) -> int:
        return self.sizes[-1]

    def __len__(self):
        return self.flat.size

    def copy(self) -> "MLPParams":
        return MLPParams(self.sizes, self.flat.copy())


class GradientSet(MLPParams):
    """Per-layer (dW, db) with the same flat layout as the parameters."""


def init_mlp(sizes, rng: Pcg32) -> MLPParams:
    """He-normal weights (std = sqrt(2 / fan_in)), zero biases."""
    params = MLPParams(sizes)
    for W, _ in params.layers:
        fan_in, fan_out = W.shape
        W[...] = rand_normal(rng, fan_in, fan_out, 0.0, np.sqrt(2.0 / fan_in))
    return params


@dataclass
class ForwardCache:
    params: MLPParams
    snapshot: np.ndarray
    inputs: list = field(default_factory=list)  # activation entering each layer
    pre: list = field(default_factory=list)  # pre-activation leaving each layer

    @property
    def batch(self) -> int:
        return self.inputs[0].shape[0]


def mlp_forward(params: MLPParams, x) -> tuple[np.ndarray, ForwardCache]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.sizes[0]:
        raise DimensionError(f"input shape {x.shape} does not match fan_in {params.sizes[0]}")
    cache = ForwardCache(params, params.flat.copy())
    a = x
    last = len(params.layers) - 1
    for k, (W, b) in enumerate(params.layers):
        cache.inputs.append(a)
        z = a @ W + b
        cache.pre.append(z)
        a = np.maximum(z, 0.0) if k < last else z
    return a, cache


def softmax(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def log_softmax(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def cross_entropy_loss(logits, labels) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy and its gradient w.r.t. the logits."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels).astype(np.int64).ravel()
    B, C = logits.shape
    if labels.size != B:
        raise DimensionError(f"{labels.size} labels for a batch of {B}")
    if labels.size and (labels.min() < 0 or labels.max() >= C):
        raise ValueError(f"labels must lie in [0, {C})")
    logp = log_softmax(logits)
    rows = np.arange(B)
    loss = -float(logp[rows, labels].mean())
    dlogits = np.exp(logp)
    dlogits[rows, labels] -= 1.0
    dlogits /= B
    return loss, dlogits


def _check_cache(params: MLPParams, cache: ForwardCache):
    if cache.params is not params or not np.array_equal(cache.snapshot, params.flat):
        raise UsageError("forward cache does not belong to these parameters (stale or mismatched)")


def _backprop_deltas(params: MLPParams, cache: ForwardCache, dlogits):
    """Yield (layer index, layer input, output delta) from the top layer down."""
    delta = dlogits
    for k in range(len(params.layers) - 1, -1, -1):
        yield k, cache.inputs[k], delta
        if k:
            W = params.layers[k][0]
            delta = (delta @ W.T) * (cache.pre[k - 1] > 0)


def mlp_backward(params: MLPParams, cache: ForwardCache, dlogits) -> GradientSet:
    """Gradients of the scalar loss given its gradient w.r.t. the logits."""
    _check_cache(params, cache)
    dlogits = np.asarray(dlogits, dtype=np.float64)
    if dlogits.shape != (cache.batch, params.num_classes):
        raise DimensionError(f"dlogits shape {dlogits.shape} does not match the forward pass")
    grads = GradientSet(params.sizes)
    for k, a, delta in _backprop_deltas(params, cache, dlogits):
        dW, db = grads.layers[k]
        dW[...] = a.T @ delta
        db[...] = delta.sum(axis=0, keepdims=True)
    return grads


def mlp_backward_sq_per_example(params: MLPParams, cache: ForwardCache, dlogits) -> GradientSet:
    """Sum over batch rows of the *squared* per-example gradients.

    Row ``i`` of ``dlogits`` must be the gradient of example ``i``'s own loss.
    A dense layer's per-example weight gradient is the outer product of its
    input row and output delta, so its square is the outer product of the
    squares and the batch sum collapses to one matrix product.
    """
    _check_cache(params, cache)
    dlogits = np.asarray(dlogits, dtype=np.float64)
    out = GradientSet(params.sizes)
    for k, a, delta in _backprop_deltas(params, cache, dlogits):
        dW, db = out.layers[k]
        dW[...] = (a * a).T @ (delta * delta)
        db[...] = (delta * delta).sum(axis=0, keepdims=True)
    return out


def predict(params: MLPParams, x) -> np.ndarray:
    logits, _ = mlp_forward(params, x)
    return np.argmax(logits, axis=1)  # first maximum wins ties

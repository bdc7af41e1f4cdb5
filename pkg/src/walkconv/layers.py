"""Layer zoo: graph convolution, dense, ReLU, dropout, flatten, heads.

Each parameterized layer is a small mutable container (weights, bias)
with stateless forward/backward rules exposed both as module functions
and as caching instance methods; the instance methods remember exactly
what the next backward call needs.

Backward rules return parameter gradients alongside the input gradient,
so a training step is: forward through the layer list, fused head for
loss + gradient, backward through the reversed list, then one optimizer
update over (params, grads) pairs.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError, DimensionError
from .kernels import gather_neighbors, scatter_add_grad, tensor_dot
from .neighbors import NeighborTable
from .objectives import rmse_loss

__all__ = [
    "GraphConvLayer",
    "DenseLayer",
    "ReluLayer",
    "DropoutLayer",
    "FlattenLayer",
    "graph_conv_forward",
    "graph_conv_backward",
    "dense_forward",
    "dense_backward",
    "relu_forward",
    "relu_backward",
    "dropout_forward",
    "dropout_backward",
    "flatten_nodes",
    "unflatten_nodes",
    "softmax_cross_entropy_head",
    "linear_rmse_head",
    "glorot_uniform",
]


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    """Uniform init with variance scaled by fan-in + fan-out."""
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


# ---------------------------------------------------------------------------
# functional forward/backward rules
# ---------------------------------------------------------------------------

def graph_conv_forward(layer: "GraphConvLayer", x: np.ndarray, mode: str = "eval") -> np.ndarray:
    """out = tensor_dot(gather(x), weights) + bias, per Eq-style contract.

    The two convolution variants differ only in the gather: a table
    built with signed visit weights scales each neighbor feature before
    the shared dot product.
    """
    del mode  # the convolution itself has no train/eval difference
    return tensor_dot(gather_neighbors(x, layer.table), layer.weights) + layer.bias


def graph_conv_backward(layer: "GraphConvLayer", x: np.ndarray, upstream: np.ndarray):
    """Gradients of graph_conv_forward.

    Returns (grad_weights, grad_bias, grad_x). grad_x routes each slot's
    gradient back to the node it was gathered from (scatter-add), with
    the same per-slot weighting the forward gather applied.
    """
    if upstream.shape[:2] != x.shape[:2] or upstream.shape[2] != layer.weights.shape[2]:
        raise DimensionError(
            f"upstream shape {upstream.shape} does not match forward output"
        )
    gathered = gather_neighbors(x, layer.table)
    grad_w = np.tensordot(gathered, upstream, axes=([0, 1], [0, 1]))
    grad_b = upstream.sum(axis=(0, 1))
    grad_slots = np.tensordot(upstream, layer.weights, axes=([2], [2]))
    grad_x = scatter_add_grad(grad_slots, layer.table)
    return grad_w, grad_b, grad_x


def dense_forward(layer: "DenseLayer", x: np.ndarray) -> np.ndarray:
    if x.ndim != 2 or x.shape[1] != layer.weights.shape[0]:
        raise DimensionError(
            f"dense layer expects (batch, {layer.weights.shape[0]}), got {x.shape}"
        )
    return x @ layer.weights + layer.bias


def dense_backward(layer: "DenseLayer", x: np.ndarray, upstream: np.ndarray):
    grad_w = x.T @ upstream
    grad_b = upstream.sum(axis=0)
    grad_x = upstream @ layer.weights.T
    return grad_w, grad_b, grad_x


def relu_forward(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(x: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    # Subgradient 0 at the kink.
    return upstream * (x > 0.0)


def dropout_forward(x: np.ndarray, rate: float, mode: str, rng: np.random.Generator | None):
    """Inverted dropout: kept units scaled by 1/(1-rate) at train time.

    Returns (out, mask); mask is None whenever the pass was an identity
    (eval mode or rate 0), and evaluation never rescales.
    """
    if not 0.0 <= rate < 1.0:
        raise ConfigurationError(f"dropout rate must be in [0, 1), got {rate}")
    if mode != "train" or rate == 0.0:
        return x, None
    if rng is None:
        raise ConfigurationError("dropout in train mode needs a random generator")
    mask = rng.random(x.shape) >= rate
    return x * mask / (1.0 - rate), mask


def dropout_backward(mask: np.ndarray | None, rate: float, upstream: np.ndarray) -> np.ndarray:
    if mask is None:
        return upstream
    return upstream * mask / (1.0 - rate)


def flatten_nodes(x: np.ndarray) -> np.ndarray:
    """(M, N, d) -> (M, N*d), channel-major within each node."""
    if x.ndim != 3:
        raise DimensionError(f"flatten expects (batch, nodes, channels), got {x.shape}")
    return x.reshape(x.shape[0], -1)


def unflatten_nodes(x: np.ndarray, n_nodes: int, d: int) -> np.ndarray:
    if x.ndim != 2 or x.shape[1] != n_nodes * d:
        raise DimensionError(f"cannot unflatten {x.shape} to ({n_nodes}, {d})")
    return x.reshape(x.shape[0], n_nodes, d)


def softmax_cross_entropy_head(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy of a softmax over logits, fused with its gradient.

    Returns (loss, grad_logits). Numerically stable via max-shift; the
    gradient is (softmax - onehot) / batch.
    """
    if logits.ndim != 2:
        raise DimensionError(f"logits must be (batch, classes), got {logits.shape}")
    labels = np.asarray(labels).ravel()
    if labels.shape[0] != logits.shape[0]:
        raise DimensionError("one label per row of logits required")
    m = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    loss = float(np.mean(log_z - shifted[np.arange(m), labels]))
    probs = np.exp(shifted - log_z[:, None])
    grad = probs
    grad[np.arange(m), labels] -= 1.0
    return loss, grad / m


def linear_rmse_head(scores: np.ndarray, targets: np.ndarray):
    """Regression head: identity output, RMSE loss, fused gradient.

    scores is the (batch, 1) output of the final dense layer; returns
    (loss, grad_scores) with the gradient shaped like scores.
    """
    if scores.ndim != 2 or scores.shape[1] != 1:
        raise DimensionError(f"regression head expects (batch, 1) scores, got {scores.shape}")
    loss, grad = rmse_loss(scores[:, 0], np.asarray(targets, dtype=np.float64).ravel())
    return loss, grad[:, None]


# ---------------------------------------------------------------------------
# caching layer objects (what Network stacks)
# ---------------------------------------------------------------------------

class GraphConvLayer:
    """Shared-weight convolution over a fixed neighbor table.

    Weight tensor (p, d_in, d_out): position j applies to every node's
    j-th nearest neighbor. Parameter count p*d_in*d_out + d_out.
    """

    def __init__(self, table: NeighborTable, d_in: int, d_out: int,
                 rng: np.random.Generator, name: str = "conv"):
        if d_in < 1 or d_out < 1:
            raise ConfigurationError("channel counts must be >= 1")
        self.table = table
        self.variant = table.variant
        self.weights = glorot_uniform(rng, table.p * d_in, d_out, (table.p, d_in, d_out))
        self.bias = np.zeros(d_out)
        self.name = name
        self.grad_weights = np.zeros_like(self.weights)
        self.grad_bias = np.zeros_like(self.bias)
        self._x = None

    def forward(self, x, mode="eval", rng=None):
        del rng
        self._x = x
        return graph_conv_forward(self, x, mode)

    def backward(self, upstream):
        gw, gb, gx = graph_conv_backward(self, self._x, upstream)
        self.grad_weights = gw
        self.grad_bias = gb
        return gx

    def params(self):
        return [self.weights, self.bias]

    def grads(self):
        return [self.grad_weights, self.grad_bias]

    def set_params(self, arrays):
        w, b = arrays
        if w.shape != self.weights.shape or b.shape != self.bias.shape:
            raise DimensionError(f"checkpoint shapes do not fit layer {self.name}")
        self.weights = np.asarray(w, dtype=np.float64)
        self.bias = np.asarray(b, dtype=np.float64)

    def out_shape(self, in_shape):
        return (in_shape[0], self.weights.shape[2])


class DenseLayer:
    """Affine map (batch, n_in) -> (batch, n_out)."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, name: str = "dense"):
        if n_in < 1 or n_out < 1:
            raise ConfigurationError("layer widths must be >= 1")
        self.weights = glorot_uniform(rng, n_in, n_out, (n_in, n_out))
        self.bias = np.zeros(n_out)
        self.name = name
        self.grad_weights = np.zeros_like(self.weights)
        self.grad_bias = np.zeros_like(self.bias)
        self._x = None

    def forward(self, x, mode="eval", rng=None):
        del mode, rng
        self._x = x
        return dense_forward(self, x)

    def backward(self, upstream):
        gw, gb, gx = dense_backward(self, self._x, upstream)
        self.grad_weights = gw
        self.grad_bias = gb
        return gx

    def params(self):
        return [self.weights, self.bias]

    def grads(self):
        return [self.grad_weights, self.grad_bias]

    def set_params(self, arrays):
        w, b = arrays
        if w.shape != self.weights.shape or b.shape != self.bias.shape:
            raise DimensionError(f"checkpoint shapes do not fit layer {self.name}")
        self.weights = np.asarray(w, dtype=np.float64)
        self.bias = np.asarray(b, dtype=np.float64)


class ReluLayer:
    def __init__(self, name: str = "relu"):
        self.name = name
        self._x = None

    def forward(self, x, mode="eval", rng=None):
        del mode, rng
        self._x = x
        return relu_forward(x)

    def backward(self, upstream):
        return relu_backward(self._x, upstream)

    def params(self):
        return []

    def grads(self):
        return []


class DropoutLayer:
    def __init__(self, rate: float, name: str = "dropout"):
        if not 0.0 <= rate < 1.0:
            raise ConfigurationError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate
        self.name = name
        self._mask = None

    def forward(self, x, mode="eval", rng=None):
        out, self._mask = dropout_forward(x, self.rate, mode, rng)
        return out

    def backward(self, upstream):
        return dropout_backward(self._mask, self.rate, upstream)

    def params(self):
        return []

    def grads(self):
        return []


class FlattenLayer:
    def __init__(self, name: str = "flatten"):
        self.name = name
        self._shape = None

    def forward(self, x, mode="eval", rng=None):
        del mode, rng
        self._shape = x.shape
        return flatten_nodes(x)

    def backward(self, upstream):
        return unflatten_nodes(upstream, self._shape[1], self._shape[2])

    def params(self):
        return []

    def grads(self):
        return []

"""Network assembly from architecture strings, plus checkpointing.

An architecture string is a dash-separated list of hidden layers:
``C<n>`` a graph convolution with n output channels, ``FC<n>`` a dense
layer with n units; each is followed by ReLU and (when a rate is set)
dropout. The task head -- softmax classifier or single-output linear
regressor -- is appended automatically and never gets dropout. The
empty string is a bare head: logistic regression for classification.

Graph convolutions must precede any dense layer: flattening node
features loses the node structure the table indexes.
"""

from __future__ import annotations

import json
import re

import numpy as np

from .errors import ConfigurationError, DimensionError
from .layers import (
    DenseLayer,
    DropoutLayer,
    FlattenLayer,
    GraphConvLayer,
    ReluLayer,
    linear_rmse_head,
    softmax_cross_entropy_head,
)
from .neighbors import NeighborTable, table_content_hash

__all__ = [
    "Network",
    "parse_architecture",
    "count_parameters",
    "save_checkpoint",
    "load_checkpoint",
]

_CHECKPOINT_FORMAT = "walkconv-checkpoint"
_CHECKPOINT_VERSION = 1
_TOKEN = re.compile(r"(FC|C)([0-9]+)$")


class Network:
    """Ordered layer stack with a task head.

    The stack maps a node tensor (batch, n_nodes, d_input) to head
    scores: (batch, n_classes) logits for classification, (batch, 1)
    values for regression.
    """

    def __init__(self, layers, spec_string: str, task: str, n_nodes: int,
                 d_input: int, n_outputs: int, dropout_rate: float):
        if task not in ("classification", "regression"):
            raise ConfigurationError(f"unknown task {task!r}")
        self.layers = layers
        self.spec_string = spec_string
        self.task = task
        self.n_nodes = n_nodes
        self.d_input = d_input
        self.n_outputs = n_outputs
        self.dropout_rate = dropout_rate

    def forward(self, x: np.ndarray, mode: str = "eval",
                rng: np.random.Generator | None = None) -> np.ndarray:
        if x.ndim != 3 or x.shape[1] != self.n_nodes or x.shape[2] != self.d_input:
            raise DimensionError(
                f"network expects (batch, {self.n_nodes}, {self.d_input}), got {x.shape}"
            )
        for layer in self.layers:
            x = layer.forward(x, mode=mode, rng=rng)
        return x

    def head_loss(self, scores: np.ndarray, targets: np.ndarray):
        """Fused loss + score gradient for this network's task."""
        if self.task == "classification":
            return softmax_cross_entropy_head(scores, targets)
        return linear_rmse_head(scores, targets)

    def backward(self, grad_scores: np.ndarray) -> np.ndarray:
        """Propagate the head gradient; leaves parameter grads on layers."""
        g = grad_scores
        for layer in reversed(self.layers):
            g = layer.backward(g)
        return g

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Eval-mode prediction: class indices or regression values."""
        scores = self.forward(x, mode="eval")
        if self.task == "classification":
            return scores.argmax(axis=1)
        return scores[:, 0]

    def params(self):
        return [p for layer in self.layers for p in layer.params()]

    def grads(self):
        return [g for layer in self.layers for g in layer.grads()]

    def param_names(self):
        """One name per parameter array, for optimizer diagnostics."""
        names = []
        for layer in self.layers:
            for tag in ("weights", "bias")[: len(layer.params())]:
                names.append(f"{layer.name}.{tag}")
        return names


def parse_architecture(
    spec: str,
    n_nodes: int,
    d_input: int,
    n_outputs: int,
    table: NeighborTable | None = None,
    dropout_rate: float = 0.0,
    task: str = "classification",
    rng: np.random.Generator | None = None,
) -> Network:
    """Build a Network from an architecture string.

    Raises a configuration error naming the character position of any
    malformed token, and rejects a graph convolution appearing after a
    fully connected layer.
    """
    if rng is None:
        rng = np.random.default_rng()
    if not 0.0 <= dropout_rate < 1.0:
        raise ConfigurationError(f"dropout rate must be in [0, 1), got {dropout_rate}")
    if n_nodes < 1 or d_input < 1 or n_outputs < 1:
        raise ConfigurationError("n_nodes, d_input and n_outputs must all be >= 1")

    layers = []
    node_channels = d_input  # channels per node while still graph-shaped
    flat_width = None  # set once flattened; graph convs are then illegal
    pos = 0
    spec = spec.strip()
    tokens = spec.split("-") if spec else []
    for ordinal, token in enumerate(tokens):
        m = _TOKEN.match(token)
        if m is None or int(m.group(2)) < 1:
            raise ConfigurationError(
                f"bad layer token {token!r} at position {pos} "
                f"(expected C<n> or FC<n>, n >= 1)"
            )
        kind, units = m.group(1), int(m.group(2))
        name = f"{token}[{ordinal}]"
        if kind == "C":
            if flat_width is not None:
                raise ConfigurationError(
                    f"graph convolution {token!r} at position {pos} cannot follow "
                    f"a fully connected layer (node structure already flattened)"
                )
            if table is None:
                raise ConfigurationError(
                    "architecture uses graph convolutions but no neighbor table was given"
                )
            if table.n_nodes != n_nodes:
                raise DimensionError(
                    f"neighbor table covers {table.n_nodes} nodes, data has {n_nodes}"
                )
            layers.append(GraphConvLayer(table, node_channels, units, rng, name=name))
            node_channels = units
        else:
            if flat_width is None:
                layers.append(FlattenLayer(name=f"flatten[{ordinal}]"))
                flat_width = n_nodes * node_channels
            layers.append(DenseLayer(flat_width, units, rng, name=name))
            flat_width = units
        layers.append(ReluLayer(name=f"relu[{ordinal}]"))
        if dropout_rate > 0.0:
            layers.append(DropoutLayer(dropout_rate, name=f"dropout[{ordinal}]"))
        pos += len(token) + 1

    if flat_width is None:
        layers.append(FlattenLayer(name="flatten[head]"))
        flat_width = n_nodes * node_channels
    layers.append(DenseLayer(flat_width, n_outputs, rng, name="head"))
    return Network(layers, spec, task, n_nodes, d_input, n_outputs, dropout_rate)


def count_parameters(net: Network) -> int:
    """Exact number of trainable scalars in the network."""
    return int(sum(p.size for p in net.params()))


def save_checkpoint(path, net: Network, seed: int | None,
                    table: NeighborTable | None, extra: dict | None = None) -> None:
    """Write parameters (as float32) plus everything needed to rebuild.

    The checkpoint pins the content hash of the neighbor table it was
    trained with; loading against a different table is refused.
    """
    meta = {
        "format": _CHECKPOINT_FORMAT,
        "version": _CHECKPOINT_VERSION,
        "spec_string": net.spec_string,
        "task": net.task,
        "n_nodes": net.n_nodes,
        "d_input": net.d_input,
        "n_outputs": net.n_outputs,
        "dropout_rate": net.dropout_rate,
        "seed": seed,
        "table_hash": None if table is None else table_content_hash(table),
        "layer_shapes": [[list(p.shape) for p in layer.params()] for layer in net.layers],
        "extra": extra or {},
    }
    arrays = {f"param_{i}": p.astype(np.float32) for i, p in enumerate(net.params())}
    meta_bytes = np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, meta=meta_bytes, **arrays)


def load_checkpoint(path, table: NeighborTable | None = None):
    """Rebuild a Network from a checkpoint. Returns (net, meta).

    If the architecture contains graph convolutions, the same neighbor
    table must be supplied; a content-hash mismatch is refused.
    """
    with np.load(path, allow_pickle=False) as archive:
        try:
            meta = json.loads(bytes(archive["meta"]).decode("utf-8"))
        except (KeyError, ValueError) as exc:
            raise ConfigurationError(f"not a recognizable checkpoint: {path}") from exc
        if meta.get("format") != _CHECKPOINT_FORMAT:
            raise ConfigurationError(f"not a recognizable checkpoint: {path}")
        if meta.get("version") != _CHECKPOINT_VERSION:
            raise ConfigurationError(
                f"unsupported checkpoint version {meta.get('version')}"
            )
        params = [archive[f"param_{i}"] for i in range(len(archive.files) - 1)]

    needs_table = "C" in re.sub(r"FC[0-9]+", "", meta["spec_string"])
    if needs_table:
        if table is None:
            raise ConfigurationError(
                "checkpoint architecture uses graph convolutions; pass its neighbor table"
            )
        found = table_content_hash(table)
        if meta["table_hash"] != found:
            raise ConfigurationError(
                "refusing to load: neighbor table content hash "
                f"{found[:12]}… differs from the checkpoint's "
                f"{str(meta['table_hash'])[:12]}…"
            )
    net = parse_architecture(
        meta["spec_string"],
        n_nodes=meta["n_nodes"],
        d_input=meta["d_input"],
        n_outputs=meta["n_outputs"],
        table=table if needs_table else None,
        dropout_rate=meta["dropout_rate"],
        task=meta["task"],
        rng=np.random.default_rng(0),
    )
    i = 0
    for layer in net.layers:
        k = len(layer.params())
        if k:
            layer.set_params([np.asarray(p, dtype=np.float64) for p in params[i : i + k]])
            i += k
    if i != len(params):
        raise ConfigurationError("checkpoint parameter count does not match architecture")
    return net, meta

"""Array kernels behind the graph convolution layers.

Shapes follow one convention throughout: a batch activation tensor is
(batch, n_nodes, channels); a neighbor gather expands it to
(batch, n_nodes, p, channels); a convolution weight tensor is
(p, channels_in, channels_out). Row-major contiguous layout everywhere,
so a node's gathered neighborhood is a sequential read.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError
from .neighbors import NeighborTable

__all__ = ["gather_neighbors", "tensor_dot", "scatter_add_grad"]


def gather_neighbors(x: np.ndarray, table: NeighborTable) -> np.ndarray:
    """Collect each node's neighbor features into a 4-D block.

    out[m, i, j, :] is the feature vector of node i's j-th nearest
    neighbor. When the table carries signed visit weights (the
    correlation-sign-aware variant), each slot is scaled by its weight;
    padded slots contribute zeros either way.

    Parameters
    ----------
    x : (batch, n_nodes, d) ndarray
    table : NeighborTable

    Returns
    -------
    (batch, n_nodes, p, d) ndarray
    """
    if x.ndim != 3:
        raise DimensionError(f"activations must be (batch, nodes, channels), got {x.shape}")
    if table.n_nodes != x.shape[1]:
        raise DimensionError(
            f"table covers {table.n_nodes} nodes but activations have {x.shape[1]}"
        )
    g = x[:, table.indices, :]
    if table.weights is not None:
        g = g * table.weights[None, :, :, None]
    elif table.pad_mask.any():
        g = g * ~table.pad_mask[None, :, :, None]
    return g


def tensor_dot(a: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Contract gathered neighborhoods with a shared weight stack.

    out[m, i, f] = sum_{j, c} a[m, i, j, c] * w[j, c, f]

    The weight stack is shared across all nodes: slot j always meets the
    j-th-nearest neighbor, whichever node that is.
    """
    if a.ndim != 4:
        raise DimensionError(f"gathered input must be 4-D, got {a.shape}")
    if w.ndim != 3:
        raise DimensionError(f"weights must be (p, d, d_new), got {w.shape}")
    if a.shape[2] != w.shape[0] or a.shape[3] != w.shape[1]:
        raise DimensionError(
            f"weights expect (p={w.shape[0]}, d={w.shape[1]}) neighborhoods, "
            f"got (p={a.shape[2]}, d={a.shape[3]})"
        )
    return np.tensordot(a, w, axes=([2, 3], [0, 1]))


def scatter_add_grad(g: np.ndarray, table: NeighborTable) -> np.ndarray:
    """Adjoint of `gather_neighbors`: route slot gradients back to nodes.

    out[m, v, :] accumulates g[m, i, j, :] (times the table weight, when
    present) over every slot (i, j) that gathered from node v. Padded
    slots contribute nothing. Satisfies the pairing
    <gather(x), g> == <x, scatter_add_grad(g)>.
    """
    if g.ndim != 4:
        raise DimensionError(f"slot gradients must be 4-D, got {g.shape}")
    n, p = table.indices.shape
    if g.shape[1] != n or g.shape[2] != p:
        raise DimensionError(
            f"slot gradients {g.shape} do not match table ({n} nodes, p={p})"
        )
    if table.weights is not None:
        g = g * table.weights[None, :, :, None]
    elif table.pad_mask.any():
        g = g * ~table.pad_mask[None, :, :, None]
    out = np.zeros((g.shape[0], n, g.shape[3]), dtype=g.dtype)
    np.add.at(out, (slice(None), table.indices), g)
    return out

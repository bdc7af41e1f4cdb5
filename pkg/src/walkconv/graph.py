"""Graph construction and random-walk visit statistics.

The preprocessing pipeline implemented here goes

    data matrix -> correlation -> similarity -> transition matrix
                -> expected-visit matrix -> (see `neighbors`) neighbor table

Everything is computed in double precision: preprocessing runs once per
graph structure, so precision is preferred over speed.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError, DimensionError

__all__ = [
    "CorrelationMatrix",
    "SimilarityGraph",
    "TransitionMatrix",
    "VisitMatrix",
    "StationaryDiagnostic",
    "correlation_from_data",
    "similarity_from_correlation",
    "transition_from_similarity",
    "expected_visits",
    "grid_graph",
    "stationary_ratio_check",
]

#: Tolerance for row-stochasticity checks on transition matrices.
ROW_SUM_TOL = 1e-12


@dataclass(frozen=True)
class CorrelationMatrix:
    """Sample Pearson correlation between features.

    Attributes
    ----------
    corr : (N, N) ndarray
        Correlation coefficients in [-1, 1]. Rows/columns of features
        flagged invalid are zeroed (including the diagonal), so they
        become isolated nodes downstream.
    valid_mask : (N,) bool ndarray
        False for features whose correlation is undefined
        (zero variance in the data they were estimated from).
    """

    corr: np.ndarray
    valid_mask: np.ndarray

    @property
    def n_features(self) -> int:
        return self.corr.shape[0]

    def __post_init__(self):
        if self.corr.ndim != 2 or self.corr.shape[0] != self.corr.shape[1]:
            raise DimensionError(f"correlation matrix must be square, got {self.corr.shape}")
        if self.valid_mask.shape != (self.corr.shape[0],):
            raise DimensionError("valid_mask length must match matrix order")
        if np.abs(self.corr).max(initial=0.0) > 1.0 + 1e-12:
            raise ValueError("correlation entries must lie in [-1, 1]")


@dataclass(frozen=True)
class SimilarityGraph:
    """Symmetric nonnegative edge weights over N nodes.

    ``weights`` is either a dense (N, N) ndarray or a scipy CSR array;
    ``storage_kind`` records which (derived from the array type when not
    given). Construction validates finiteness and nonnegativity, and
    warns (rather than fails) on asymmetric input -- an asymmetric
    matrix is accepted as a user-supplied directed graph.
    """

    weights: np.ndarray | sp.csr_array
    storage_kind: str = field(default="")

    @property
    def n_nodes(self) -> int:
        return self.weights.shape[0]

    def __post_init__(self):
        if sp.issparse(self.weights):
            object.__setattr__(self, "weights", sp.csr_array(self.weights))
            detected = "sparse"
        else:
            object.__setattr__(self, "weights", np.asarray(self.weights, dtype=np.float64))
            detected = "dense"
        if not self.storage_kind:
            object.__setattr__(self, "storage_kind", detected)
        elif self.storage_kind != detected:
            raise ConfigurationError(
                f"storage_kind {self.storage_kind!r} does not match the "
                f"{detected} weights array"
            )
        w = self.weights
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise DimensionError(f"similarity matrix must be square, got {w.shape}")
        data = w.data if self.storage_kind == "sparse" else w
        if not np.all(np.isfinite(data)):
            raise ValueError("similarity matrix contains NaN/Inf")
        if data.size and data.min(initial=0.0) < 0:
            raise ValueError("similarity weights must be nonnegative")
        if self.storage_kind == "sparse":
            asym = sp.csr_array(abs(w - w.T))
            symmetric = asym.nnz == 0 or asym.data.max() == 0.0
        else:
            symmetric = np.array_equal(w, w.T)
        if not symmetric:
            warnings.warn(
                "similarity matrix is not symmetric; accepting it as a "
                "directed graph and skipping symmetry checks",
                stacklevel=3,
            )

    def to_dense(self) -> "SimilarityGraph":
        """Return a dense-storage copy of this graph."""
        if self.storage_kind == "dense":
            return self
        return SimilarityGraph(self.weights.toarray(), storage_kind="dense")


@dataclass(frozen=True)
class TransitionMatrix:
    """Row-stochastic one-step random-walk probabilities.

    ``self_loop_rows`` marks rows that had zero total similarity and were
    replaced by a self-loop so the matrix stays row-stochastic.
    """

    probs: np.ndarray
    self_loop_rows: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.probs.shape[0]

    def __post_init__(self):
        p = self.probs
        if p.ndim != 2 or p.shape[0] != p.shape[1]:
            raise DimensionError(f"transition matrix must be square, got {p.shape}")
        if p.size:
            if p.min() < 0 or p.max() > 1:
                raise ValueError("transition probabilities must lie in [0, 1]")
            row_sums = p.sum(axis=1)
            if np.abs(row_sums - 1.0).max() > ROW_SUM_TOL:
                worst = int(np.abs(row_sums - 1.0).argmax())
                raise ValueError(
                    f"row {worst} sums to {row_sums[worst]!r}, not 1 within {ROW_SUM_TOL}"
                )


@dataclass(frozen=True)
class VisitMatrix:
    """Expected random-walk visit counts over walks of length ``k``.

    Entry (i, j) is the expected number of visits to node j during a
    k-step walk started at node i, counting the start, i.e. the sum of
    the transition matrix powers 0..k. Every row sums to k + 1.
    """

    visits: np.ndarray
    k: int

    @property
    def n_nodes(self) -> int:
        return self.visits.shape[0]

    def __post_init__(self):
        if self.k < 0:
            raise ConfigurationError(f"walk length must be >= 0, got {self.k}")
        v = self.visits
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise DimensionError(f"visit matrix must be square, got {v.shape}")
        if v.size:
            if v.min() < 0:
                raise ValueError("visit counts must be nonnegative")
            row_sums = v.sum(axis=1)
            if np.abs(row_sums - (self.k + 1)).max() > 1e-9:
                raise ValueError(f"visit-matrix rows must sum to k+1 = {self.k + 1}")


def correlation_from_data(data: np.ndarray) -> CorrelationMatrix:
    """Sample Pearson correlation of the columns of an observation matrix.

    Parameters
    ----------
    data : (M, N) ndarray
        M observations of N features, M >= 2.

    Returns
    -------
    CorrelationMatrix
        Zero-variance columns are flagged invalid and fully zeroed
        (row, column and diagonal) so they become isolated graph nodes.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2:
        raise DimensionError(f"expected a 2-D observation matrix, got shape {data.shape}")
    m, n = data.shape
    if m < 2:
        raise DimensionError(f"need at least 2 observations to estimate correlation, got {m}")
    if n < 1:
        raise DimensionError("need at least 1 feature")

    centered = data - data.mean(axis=0)
    norms = np.sqrt((centered**2).sum(axis=0))
    valid = norms > 0.0

    safe = np.where(valid, norms, 1.0)
    corr = (centered.T @ centered) / np.outer(safe, safe)
    corr = np.clip(corr, -1.0, 1.0)
    corr[~valid, :] = 0.0
    corr[:, ~valid] = 0.0
    idx = np.flatnonzero(valid)
    corr[idx, idx] = 1.0
    return CorrelationMatrix(corr=corr, valid_mask=valid)


def similarity_from_correlation(corr: CorrelationMatrix) -> SimilarityGraph:
    """Elementwise absolute value of the correlation matrix as edge weights.

    Invalid features keep all-zero rows/columns and therefore become
    isolated nodes of the graph.
    """
    return SimilarityGraph(np.abs(corr.corr), storage_kind="dense")


def transition_from_similarity(graph: SimilarityGraph) -> TransitionMatrix:
    """Row-normalize similarity weights into one-step walk probabilities.

    Each row is divided by its degree (the row sum of the similarity
    matrix). Rows of isolated nodes (zero degree) fall back to a
    self-loop, which keeps the matrix row-stochastic; such a node only
    ever visits itself. Sparse graphs are densified here -- the sparse
    preprocessing path (`neighbors.sparse_neighbors_bfs`) never builds
    the full matrix.
    """
    s = graph.to_dense().weights.astype(np.float64, copy=True)
    degree = s.sum(axis=1)
    isolated = degree == 0.0
    safe = np.where(isolated, 1.0, degree)
    probs = s / safe[:, None]
    if isolated.any():
        probs[isolated, :] = 0.0
        probs[np.flatnonzero(isolated), np.flatnonzero(isolated)] = 1.0
    return TransitionMatrix(probs=probs, self_loop_rows=isolated)


def expected_visits(transition: TransitionMatrix, k: int) -> VisitMatrix:
    """Expected visit counts for k-step walks, the power sum I + P + ... + P^k.

    Computed by iterated accumulation (``A <- A @ P``, ``Q <- Q + A``)
    so no power is ever recomputed from scratch.

    Parameters
    ----------
    transition : TransitionMatrix
    k : int
        Walk length, >= 0. ``k = 0`` returns the identity.
    """
    if k < 0:
        raise ConfigurationError(f"walk length must be >= 0, got {k}")
    p = transition.probs
    n = p.shape[0]
    q = np.eye(n, dtype=np.float64)
    a = np.eye(n, dtype=np.float64)
    for _ in range(k):
        a = a @ p
        q += a
    return VisitMatrix(visits=q, k=k)


def grid_graph(height: int, width: int, connectivity: int = 8) -> SimilarityGraph:
    """Unit-weight pixel-adjacency graph of an image grid.

    Every pixel is connected to its 8 adjoining neighbors; boundary
    pixels simply have fewer. Nodes are numbered row-major. The result
    uses sparse storage.
    """
    if connectivity != 8:
        raise ConfigurationError(f"only 8-connectivity is supported, got {connectivity}")
    if height < 1 or width < 1:
        raise DimensionError(f"grid dimensions must be >= 1, got {height}x{width}")

    rows, cols, vals = [], [], []
    for r in range(height):
        for c in range(width):
            i = r * width + c
            for dr in (-1, 0, 1):
                for dc in (-1, 0, 1):
                    if dr == 0 and dc == 0:
                        continue
                    rr, cc = r + dr, c + dc
                    if 0 <= rr < height and 0 <= cc < width:
                        rows.append(i)
                        cols.append(rr * width + cc)
                        vals.append(1.0)
    n = height * width
    weights = sp.csr_array(
        (np.array(vals), (np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64))),
        shape=(n, n),
    )
    return SimilarityGraph(weights, storage_kind="sparse")


@dataclass(frozen=True)
class StationaryDiagnostic:
    """Result of `stationary_ratio_check`.

    ``converged`` is False when power iteration did not reach tolerance
    within the iteration bound (e.g. a periodic chain); all other fields
    are then None.
    """

    converged: bool
    iterations: int
    stationary: np.ndarray | None = None
    per_node: np.ndarray | None = None
    max_deviation: float | None = None


def stationary_ratio_check(
    transition: TransitionMatrix,
    k: int,
    tol: float = 1e-12,
    max_iter: int = 100_000,
) -> StationaryDiagnostic:
    """How far Q^(k)/k has drifted toward the stationary distribution.

    For an ergodic chain, every row of Q^(k)/k converges to the
    stationary distribution, which means large walk lengths smooth away
    all local structure. This diagnostic computes the stationary
    distribution by power iteration on the transposed transition matrix
    and reports max_ij |Q_ij/k - pi_j|: small values warn that ``k`` is
    large enough to make every node's neighborhood look the same.

    Ergodicity is the caller's responsibility; if power iteration does
    not converge (periodic or reducible chains) the diagnostic is
    reported as unavailable rather than raising.
    """
    if k < 1:
        raise ConfigurationError(f"diagnostic needs walk length >= 1, got {k}")
    p = transition.probs
    n = p.shape[0]
    # Asymmetric start: the uniform vector can be a fixed point of a
    # periodic chain (e.g. a 2-cycle), which would mask non-convergence.
    v = np.arange(1.0, n + 1.0)
    v /= v.sum()
    iterations = 0
    converged = False
    for iterations in range(1, max_iter + 1):
        v_next = v @ p
        v_next /= v_next.sum()
        if np.abs(v_next - v).sum() <= tol:
            v = v_next
            converged = True
            break
        v = v_next
    if not converged:
        return StationaryDiagnostic(converged=False, iterations=iterations)

    q = expected_visits(transition, k).visits
    deviation = np.abs(q / k - v[None, :])
    return StationaryDiagnostic(
        converged=True,
        iterations=iterations,
        stationary=v,
        per_node=deviation.max(axis=1),
        max_deviation=float(deviation.max()),
    )

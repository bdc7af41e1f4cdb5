"""Per-node neighbor selection and the neighbor-table artifact.

A NeighborTable is the sole output of graph preprocessing that training
ever consumes: for every node, the p nodes with the largest expected
random-walk visit counts, in descending order. Position j in a row has
global meaning -- convolution weight j is shared across all nodes'
j-th-closest neighbors.

Two construction paths produce identical tables: the dense path sorts
rows of a full visit matrix (`select_neighbors`), while the sparse path
(`sparse_neighbors_bfs`) expands a truncated frontier per node and never
materializes the full matrix.
"""

from __future__ import annotations

import hashlib
import json
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError, DataFormatError, DimensionError
from .graph import CorrelationMatrix, SimilarityGraph, VisitMatrix

__all__ = [
    "NeighborTable",
    "select_neighbors",
    "sparse_neighbors_bfs",
    "serialize_table",
    "deserialize_table",
    "write_table",
    "read_table",
    "table_to_json",
    "write_table_json",
    "table_content_hash",
]

_FILE_MAGIC = b"GNBT"
_FILE_VERSION = 1
_VARIANT_CODES = {"conv1": 1, "conv2": 2}
_TIE_CODES = {"deterministic": 0, "seeded": 1}


@dataclass(frozen=True)
class NeighborTable:
    """Ordered top-p neighbors per node, plus padding bookkeeping.

    Attributes
    ----------
    indices : (n_nodes, p) int64 ndarray
        Neighbor node ids in descending visit-count order. Rows with
        fewer than p reachable nodes are padded with the node's own id.
    weights : (n_nodes, p) float64 ndarray or None
        Signed visit counts sign(R_ij) * Q_ij, present only for the
        correlation-sign-aware convolution variant ("conv2"); zero at
        padded positions.
    pad_mask : (n_nodes, p) bool ndarray
        True where an entry is padding and must contribute nothing.
    k : int
        Walk length the visit counts were computed with.
    variant : str
        "conv1" (plain gather) or "conv2" (signed-visit-weighted gather).
    tie_break : str
        "deterministic" (self first, then value, then lowest index) or
        "seeded" (value, then a seeded-random order).
    seed : int or None
        The tie-break seed; required iff ``tie_break == "seeded"``.
    """

    indices: np.ndarray
    weights: np.ndarray | None
    pad_mask: np.ndarray
    k: int
    variant: str = "conv1"
    tie_break: str = "deterministic"
    seed: int | None = None

    @property
    def n_nodes(self) -> int:
        return self.indices.shape[0]

    @property
    def p(self) -> int:
        return self.indices.shape[1]

    def __post_init__(self):
        idx, mask = self.indices, self.pad_mask
        if idx.ndim != 2:
            raise DimensionError(f"indices must be 2-D, got shape {idx.shape}")
        n, p = idx.shape
        if mask.shape != (n, p):
            raise DimensionError("pad_mask shape must match indices")
        if self.variant not in _VARIANT_CODES:
            raise ConfigurationError(f"unknown variant {self.variant!r}")
        if self.tie_break not in _TIE_CODES:
            raise ConfigurationError(f"unknown tie-break policy {self.tie_break!r}")
        if (self.tie_break == "seeded") != (self.seed is not None):
            raise ConfigurationError("seed must be given exactly when tie_break='seeded'")
        if (self.variant == "conv2") != (self.weights is not None):
            raise ConfigurationError("weights must be present exactly for variant='conv2'")
        if self.weights is not None and self.weights.shape != (n, p):
            raise DimensionError("weights shape must match indices")
        if idx.size and (idx.min() < 0 or idx.max() >= n):
            raise ValueError("neighbor indices out of range")
        for i in range(n):
            real = idx[i][~mask[i]]
            if len(np.unique(real)) != len(real):
                raise ValueError(f"row {i} repeats a non-padded neighbor")

    def pad_count(self) -> int:
        """Total number of padded entries in the table."""
        return int(self.pad_mask.sum())


def _row_tie_key(n: int, i: int, tie_break: str, seed: int | None) -> np.ndarray:
    """Secondary sort key for row i: smaller key wins among equal visits."""
    if tie_break == "deterministic":
        # Self first, then ascending node index. Scaling keeps the
        # self-flag dominant over the index term.
        key = np.arange(n, dtype=np.float64) + n
        key[i] = 0.0
        return key
    rng = np.random.default_rng([seed, i])
    return rng.random(n)


def _select_row(
    q_row: np.ndarray,
    i: int,
    p: int,
    tie_break: str,
    seed: int | None,
    corr_row: np.ndarray | None,
):
    """Top-p selection for one node. Returns (indices, weights|None, pad)."""
    n = q_row.shape[0]
    candidates = np.flatnonzero(q_row > 0.0)
    tie_key = _row_tie_key(n, i, tie_break, seed)
    # lexsort uses the last key as primary: descending visits, then tie key.
    order = candidates[np.lexsort((tie_key[candidates], -q_row[candidates]))]
    take = min(p, order.shape[0])

    idx = np.full(p, i, dtype=np.int64)
    idx[:take] = order[:take]
    pad = np.zeros(p, dtype=bool)
    pad[take:] = True
    if corr_row is None:
        return idx, None, pad
    sign = np.where(corr_row[idx] < 0.0, -1.0, 1.0)
    w = sign * q_row[idx]
    w[pad] = 0.0
    return idx, w, pad


def _check_selection_args(n: int, p: int, variant: str, corr: CorrelationMatrix | None):
    if p > n:
        raise DimensionError(f"p = {p} exceeds the number of nodes ({n})")
    if p < 1:
        raise DimensionError(f"p must be >= 1, got {p}")
    if variant not in _VARIANT_CODES:
        raise ConfigurationError(f"unknown variant {variant!r}")
    if variant == "conv2":
        if corr is None:
            raise ConfigurationError("variant 'conv2' needs the correlation matrix for signs")
        if corr.n_features != n:
            raise DimensionError("correlation matrix order must match the node count")
    if variant == "conv1" and corr is not None:
        corr = None
    return corr


def select_neighbors(
    visits: VisitMatrix,
    p: int,
    variant: str = "conv1",
    corr: CorrelationMatrix | None = None,
    tie_break: str = "deterministic",
    seed: int | None = None,
) -> NeighborTable:
    """Build a neighbor table from a dense visit matrix.

    Row i lists the first p nodes of the descending ordering of row i of
    the visit matrix. Only reachable nodes (positive visit count) are
    eligible; rows with fewer than p of them are padded with the node's
    own index, weight 0, and a set pad flag, so padded positions
    contribute nothing to a convolution.

    Ties are completed into a total order by the policy: the default
    deterministic policy puts the node itself first among equals, then
    the lowest index; the seeded policy orders equals by a per-row
    seeded random draw (recorded in the table).
    """
    n = visits.n_nodes
    corr = _check_selection_args(n, p, variant, corr)
    if tie_break == "seeded" and seed is None:
        raise ConfigurationError("tie_break='seeded' requires a seed")
    if tie_break == "deterministic":
        seed = None

    q = visits.visits
    indices = np.empty((n, p), dtype=np.int64)
    weights = np.empty((n, p), dtype=np.float64) if variant == "conv2" else None
    pad = np.empty((n, p), dtype=bool)
    for i in range(n):
        corr_row = corr.corr[i] if corr is not None else None
        idx_i, w_i, pad_i = _select_row(q[i], i, p, tie_break, seed, corr_row)
        indices[i] = idx_i
        pad[i] = pad_i
        if weights is not None:
            weights[i] = w_i
    return NeighborTable(
        indices=indices,
        weights=weights,
        pad_mask=pad,
        k=visits.k,
        variant=variant,
        tie_break=tie_break,
        seed=seed,
    )


def _row_stochastic_csr(graph: SimilarityGraph) -> sp.csr_array:
    """Sparse transition matrix; zero-degree rows become self-loops."""
    s = sp.csr_array(graph.weights, dtype=np.float64)
    degree = np.asarray(s.sum(axis=1)).ravel()
    isolated = np.flatnonzero(degree == 0.0)
    inv = np.where(degree > 0.0, 1.0 / np.where(degree > 0.0, degree, 1.0), 0.0)
    p = sp.csr_array(sp.diags(inv) @ s)
    if isolated.size:
        loops = sp.csr_array(
            (np.ones(isolated.size), (isolated, isolated)), shape=s.shape
        )
        p = sp.csr_array(p + loops)
    p.sort_indices()
    return p


def _bfs_visit_row(
    i: int,
    k: int,
    indptr: np.ndarray,
    col_idx: np.ndarray,
    vals: np.ndarray,
    n: int,
) -> np.ndarray:
    """Row i of the visit matrix via truncated frontier expansion.

    Walk mass spreads one hop per step, so nodes farther than k edges
    from i are never touched; workspace is O(n), not O(n^2).
    """
    row = np.zeros(n, dtype=np.float64)
    cur = np.zeros(n, dtype=np.float64)
    row[i] = 1.0
    cur[i] = 1.0
    frontier = np.array([i], dtype=np.int64)
    for _ in range(k):
        nxt = np.zeros(n, dtype=np.float64)
        for u in frontier:
            lo, hi = indptr[u], indptr[u + 1]
            nxt[col_idx[lo:hi]] += cur[u] * vals[lo:hi]
        row += nxt
        cur = nxt
        frontier = np.flatnonzero(cur)
    return row


def _bfs_row_block(args):
    lo, hi, k, p, tie_break, seed, indptr, col_idx, vals, n, corr_rows = args
    out = []
    for i in range(lo, hi):
        q_row = _bfs_visit_row(i, k, indptr, col_idx, vals, n)
        corr_row = corr_rows[i - lo] if corr_rows is not None else None
        out.append(_select_row(q_row, i, p, tie_break, seed, corr_row))
    return out


def sparse_neighbors_bfs(
    graph: SimilarityGraph,
    k: int,
    p: int,
    variant: str = "conv1",
    corr: CorrelationMatrix | None = None,
    tie_break: str = "deterministic",
    seed: int | None = None,
    workers: int = 1,
) -> NeighborTable:
    """Neighbor table for a sparse graph without a dense visit matrix.

    Per node, expands walk mass outward for k hops (a breadth-first
    frontier carrying visit counts), then selects exactly as
    `select_neighbors` does. For the same graph, k, p and tie-break
    policy, the output is identical to the dense path.

    Rows are independent, so ``workers > 1`` processes row blocks in
    parallel; results are assembled by row index and are identical for
    any worker count.
    """
    if graph.storage_kind != "sparse":
        raise ConfigurationError(
            "graph uses dense storage; compute expected_visits and call "
            "select_neighbors instead"
        )
    if k < 1:
        raise ConfigurationError(f"the sparse path needs walk length >= 1, got {k}")
    n = graph.n_nodes
    corr = _check_selection_args(n, p, variant, corr)
    if tie_break == "seeded" and seed is None:
        raise ConfigurationError("tie_break='seeded' requires a seed")
    if tie_break == "deterministic":
        seed = None

    trans = _row_stochastic_csr(graph)
    indptr, col_idx, vals = trans.indptr, trans.indices, trans.data

    indices = np.empty((n, p), dtype=np.int64)
    weights = np.empty((n, p), dtype=np.float64) if variant == "conv2" else None
    pad = np.empty((n, p), dtype=bool)

    workers = max(1, int(workers))
    blocks = []
    block_size = max(1, -(-n // workers)) if workers > 1 else n
    for lo in range(0, n, block_size):
        hi = min(n, lo + block_size)
        corr_rows = corr.corr[lo:hi] if corr is not None else None
        blocks.append((lo, hi, k, p, tie_break, seed, indptr, col_idx, vals, n, corr_rows))

    if workers == 1:
        results = [_bfs_row_block(b) for b in blocks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_bfs_row_block, blocks))

    for (lo, hi, *_), rows in zip(blocks, results):
        for i, (idx_i, w_i, pad_i) in zip(range(lo, hi), rows):
            indices[i] = idx_i
            pad[i] = pad_i
            if weights is not None:
                weights[i] = w_i
    return NeighborTable(
        indices=indices,
        weights=weights,
        pad_mask=pad,
        k=k,
        variant=variant,
        tie_break=tie_break,
        seed=seed,
    )


def serialize_table(table: NeighborTable) -> bytes:
    """Canonical binary form of a neighbor table.

    Layout (little-endian): magic "GNBT", version u32, n_nodes u64,
    p u32, k u32, variant u8 (1=conv1, 2=conv2), tie-break u8
    (0=deterministic, 1=seeded) followed by the seed as u64 iff seeded;
    indices as n*p u64 row-major; weights as n*p f64 row-major (conv2
    only); pad mask as row-major bits packed LSB-first.
    """
    head = _FILE_MAGIC + struct.pack(
        "<IQIIBB",
        _FILE_VERSION,
        table.n_nodes,
        table.p,
        table.k,
        _VARIANT_CODES[table.variant],
        _TIE_CODES[table.tie_break],
    )
    parts = [head]
    if table.tie_break == "seeded":
        parts.append(struct.pack("<Q", table.seed))
    parts.append(table.indices.astype("<u8").tobytes())
    if table.weights is not None:
        parts.append(table.weights.astype("<f8").tobytes())
    parts.append(
        np.packbits(table.pad_mask.ravel().astype(np.uint8), bitorder="little").tobytes()
    )
    return b"".join(parts)


def deserialize_table(blob: bytes) -> NeighborTable:
    """Inverse of `serialize_table`; raises DataFormatError with offsets."""
    if len(blob) < 4 or blob[:4] != _FILE_MAGIC:
        raise DataFormatError("bad magic at offset 0: not a neighbor-table file")
    off = 4
    try:
        version, n, p, k, variant_code, tie_code = struct.unpack_from("<IQIIBB", blob, off)
    except struct.error as exc:
        raise DataFormatError(f"truncated header at offset {off}") from exc
    off += struct.calcsize("<IQIIBB")
    if version != _FILE_VERSION:
        raise DataFormatError(f"unsupported format version {version}")
    variants = {v: k_ for k_, v in _VARIANT_CODES.items()}
    ties = {v: k_ for k_, v in _TIE_CODES.items()}
    if variant_code not in variants:
        raise DataFormatError(f"unknown variant code {variant_code} at offset 20")
    if tie_code not in ties:
        raise DataFormatError(f"unknown tie-break code {tie_code} at offset 21")
    seed = None
    if ties[tie_code] == "seeded":
        try:
            (seed,) = struct.unpack_from("<Q", blob, off)
        except struct.error as exc:
            raise DataFormatError(f"truncated seed at offset {off}") from exc
        off += 8

    def _take(count: int, dtype: str, what: str) -> np.ndarray:
        nonlocal off
        nbytes = count * np.dtype(dtype).itemsize
        if len(blob) < off + nbytes:
            raise DataFormatError(f"truncated {what} at offset {off}")
        arr = np.frombuffer(blob, dtype=dtype, count=count, offset=off)
        off += nbytes
        return arr

    indices = _take(n * p, "<u8", "indices").astype(np.int64).reshape(n, p)
    weights = None
    if variants[variant_code] == "conv2":
        weights = _take(n * p, "<f8", "weights").astype(np.float64).reshape(n, p)
    mask_bytes = _take(-(-(n * p) // 8), "u1", "pad mask")
    pad = np.unpackbits(mask_bytes, count=n * p, bitorder="little").astype(bool).reshape(n, p)
    if off != len(blob):
        raise DataFormatError(f"{len(blob) - off} unexpected trailing bytes at offset {off}")
    return NeighborTable(
        indices=indices,
        weights=weights,
        pad_mask=pad,
        k=k,
        variant=variants[variant_code],
        tie_break=ties[tie_code],
        seed=seed,
    )


def write_table(path, table: NeighborTable) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize_table(table))


def read_table(path) -> NeighborTable:
    with open(path, "rb") as fh:
        return deserialize_table(fh.read())


def table_to_json(table: NeighborTable) -> dict:
    """Debug-friendly JSON form with the same fields as the binary file."""
    return {
        "format": "gnbt-json",
        "version": _FILE_VERSION,
        "n_nodes": table.n_nodes,
        "p": table.p,
        "k": table.k,
        "variant": table.variant,
        "tie_break": table.tie_break,
        "seed": table.seed,
        "indices": table.indices.tolist(),
        "weights": None if table.weights is None else table.weights.tolist(),
        "pad_mask": table.pad_mask.tolist(),
    }


def write_table_json(path, table: NeighborTable) -> None:
    with open(path, "w") as fh:
        json.dump(table_to_json(table), fh)


def table_content_hash(table: NeighborTable) -> str:
    """SHA-256 of the canonical binary form; checkpoints pin this."""
    return hashlib.sha256(serialize_table(table)).hexdigest()

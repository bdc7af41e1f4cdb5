"""Dataset ingestion and preparation.

Supports the two source formats the experiments need -- the big-endian
IDX image/label containers of the MNIST distribution and numeric CSV
with a header row -- plus column filtering and train-statistics
standardization. Every dataset carries a feature index map tracing each
kept column back to its original position, so a table built on filtered
training features can be applied to identically filtered test features.
"""

from __future__ import annotations

import csv
import gzip
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DataFormatError, DimensionError

__all__ = [
    "Dataset",
    "read_idx",
    "read_csv_regression",
    "filter_features",
    "standardize",
    "apply_feature_selection",
    "take",
]

_IMAGE_MAGIC = 0x00000803
_LABEL_MAGIC = 0x00000801


@dataclass
class Dataset:
    """Feature matrix, targets, and provenance of the columns.

    feature_index_map[j] is the original column the j-th kept feature
    came from; normalization records any transform already applied.
    """

    features: np.ndarray
    targets: np.ndarray
    feature_index_map: np.ndarray = None
    normalization: dict | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise DimensionError(f"features must be 2-D, got shape {self.features.shape}")
        self.targets = np.asarray(self.targets)
        if self.targets.shape != (self.features.shape[0],):
            raise DimensionError(
                f"need one target per row: {self.features.shape[0]} rows, "
                f"{self.targets.shape} targets"
            )
        if self.feature_index_map is None:
            self.feature_index_map = np.arange(self.features.shape[1], dtype=np.int64)
        self.feature_index_map = np.asarray(self.feature_index_map, dtype=np.int64)
        if self.feature_index_map.shape != (self.features.shape[1],):
            raise DimensionError("feature_index_map must name every column")
        if np.any(np.diff(self.feature_index_map) <= 0):
            raise ConfigurationError("feature_index_map must be strictly increasing")
        if np.isnan(self.features).any() or np.isnan(
            np.asarray(self.targets, dtype=np.float64)
        ).any():
            raise DataFormatError("dataset contains NaN after ingestion")

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]


def _read_binary(path) -> bytes:
    """Whole file, decompressing transparently if gzip-compressed."""
    with open(path, "rb") as fh:
        head = fh.read(2)
        fh.seek(0)
        if head == b"\x1f\x8b":
            with gzip.open(fh) as gz:
                return gz.read()
        return fh.read()


def read_idx(images_path, labels_path) -> Dataset:
    """Load an IDX image/label pair into rows of [0, 1] pixel features.

    The container is big-endian: magic 0x00000803 then count, rows,
    cols for images; magic 0x00000801 then count for labels. Gzipped
    files are accepted and decompressed on the fly.
    """
    img = _read_binary(images_path)
    if len(img) < 16:
        raise DataFormatError(f"image file truncated at offset {len(img)}: header needs 16 bytes")
    magic, count, rows, cols = struct.unpack(">IIII", img[:16])
    if magic != _IMAGE_MAGIC:
        raise DataFormatError(
            f"bad image magic 0x{magic:08x} at offset 0 (expected 0x{_IMAGE_MAGIC:08x})"
        )
    expected = 16 + count * rows * cols
    if len(img) < expected:
        raise DataFormatError(
            f"image file truncated at offset {len(img)}: expected {expected} bytes"
        )

    lab = _read_binary(labels_path)
    if len(lab) < 8:
        raise DataFormatError(f"label file truncated at offset {len(lab)}: header needs 8 bytes")
    lmagic, lcount = struct.unpack(">II", lab[:8])
    if lmagic != _LABEL_MAGIC:
        raise DataFormatError(
            f"bad label magic 0x{lmagic:08x} at offset 0 (expected 0x{_LABEL_MAGIC:08x})"
        )
    if len(lab) < 8 + lcount:
        raise DataFormatError(
            f"label file truncated at offset {len(lab)}: expected {8 + lcount} bytes"
        )
    if lcount != count:
        raise DataFormatError(
            f"count mismatch: {count} images (offset 4) vs {lcount} labels (offset 4)"
        )

    pixels = np.frombuffer(img, dtype=np.uint8, count=count * rows * cols, offset=16)
    features = pixels.reshape(count, rows * cols).astype(np.float64) / 255.0
    labels = np.frombuffer(lab, dtype=np.uint8, count=count, offset=8).astype(np.int64)
    return Dataset(features=features, targets=labels)


def read_csv_regression(path, target_column: str) -> Dataset:
    """Numeric CSV with header -> features (all other columns) + target.

    Row order is preserved. Ragged rows and non-numeric cells raise
    format errors naming the data row and column.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty file, no header row") from None
        header = [h.strip() for h in header]
        if target_column not in header:
            raise ConfigurationError(
                f"target column {target_column!r} not in header {header}"
            )
        t_col = header.index(target_column)
        rows = []
        for r, row in enumerate(reader, start=1):
            if len(row) != len(header):
                raise DataFormatError(
                    f"row {r}: expected {len(header)} fields, got {len(row)}"
                )
            parsed = []
            for name, cell in zip(header, row):
                try:
                    value = float(cell)
                except ValueError:
                    raise DataFormatError(
                        f"row {r}, column {name!r}: cannot parse {cell!r} as a number"
                    ) from None
                if math.isnan(value):
                    raise DataFormatError(f"row {r}, column {name!r}: NaN is not allowed")
                parsed.append(value)
            rows.append(parsed)
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    table = np.asarray(rows, dtype=np.float64)
    features = np.delete(table, t_col, axis=1)
    return Dataset(features=features, targets=table[:, t_col])


def filter_features(data: Dataset, min_active: int = 0, drop_constant: bool = False) -> Dataset:
    """Keep columns with >= min_active nonzero entries and, when
    requested, nonzero variance; the index map records the survivors."""
    if min_active < 0:
        raise ConfigurationError(f"min_active must be >= 0, got {min_active}")
    x = data.features
    keep = (x != 0.0).sum(axis=0) >= min_active
    if drop_constant:
        keep &= x.min(axis=0) != x.max(axis=0)
    if not keep.any():
        raise DataFormatError("no features survive filtering; relax the thresholds")
    norm = data.normalization
    if norm is not None and "mean" in norm:
        norm = dict(norm, mean=norm["mean"][keep], std=norm["std"][keep])
    return Dataset(
        features=x[:, keep],
        targets=data.targets,
        feature_index_map=data.feature_index_map[keep],
        normalization=norm,
    )


def standardize(data: Dataset, stats_from: Dataset | None = None) -> Dataset:
    """Per-column (x - mean) / std using the statistics of stats_from
    (default: the data itself). Hold out a test split by passing the
    train split here, so no test information leaks into the transform."""
    source = data if stats_from is None else stats_from
    if not np.array_equal(source.feature_index_map, data.feature_index_map):
        raise DimensionError("statistics source has different columns than the data")
    mean = source.features.mean(axis=0)
    std = source.features.std(axis=0)
    flat = np.flatnonzero(std == 0.0)
    if flat.size:
        original = data.feature_index_map[flat[0]]
        raise ConfigurationError(
            f"feature {original} has zero variance; drop it with "
            f"filter_features(drop_constant=True) before standardizing"
        )
    return Dataset(
        features=(data.features - mean) / std,
        targets=data.targets,
        feature_index_map=data.feature_index_map,
        normalization={"kind": "standardize", "mean": mean, "std": std},
    )


def apply_feature_selection(data: Dataset, index_map: np.ndarray) -> Dataset:
    """Restrict data to the original columns named by index_map (e.g.
    the survivors of filtering a different split)."""
    index_map = np.asarray(index_map, dtype=np.int64)
    positions = np.searchsorted(data.feature_index_map, index_map)
    if positions.max(initial=-1) >= data.n_features or not np.array_equal(
        data.feature_index_map[positions], index_map
    ):
        raise ConfigurationError("index map names columns absent from this dataset")
    norm = data.normalization
    if norm is not None and "mean" in norm:
        norm = dict(norm, mean=norm["mean"][positions], std=norm["std"][positions])
    return Dataset(
        features=data.features[:, positions],
        targets=data.targets,
        feature_index_map=index_map,
        normalization=norm,
    )


def take(data: Dataset, n: int) -> Dataset:
    """First n samples, unchanged columns."""
    if n < 1:
        raise ConfigurationError(f"cannot take {n} samples")
    return Dataset(
        features=data.features[:n],
        targets=data.targets[:n],
        feature_index_map=data.feature_index_map,
        normalization=data.normalization,
    )

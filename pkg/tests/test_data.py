"""Dataset ingestion, filtering and standardization tests.

IDX parsing is checked against hand-assembled byte fixtures (raw and
gzipped) and the real MNIST files, including the canonical count of 717
nonconstant pixels on the full training split. CSV, filtering and
standardization behavior is pinned with small explicit fixtures,
notably that test-split standardization uses train statistics only.
"""

import gzip
import struct
from pathlib import Path

import numpy as np
import pytest

from walkconv import (
    ConfigurationError,
    DataFormatError,
    Dataset,
    DimensionError,
    apply_feature_selection,
    filter_features,
    read_csv_regression,
    read_idx,
    standardize,
    take,
)

MNIST_DIR = Path(__file__).resolve().parent.parent / "data" / "mnist"


def idx_image_bytes(images):
    """Assemble an IDX image container from a (count, rows, cols) array."""
    arr = np.asarray(images, dtype=np.uint8)
    header = struct.pack(">IIII", 0x00000803, *arr.shape)
    return header + arr.tobytes()


def idx_label_bytes(labels):
    arr = np.asarray(labels, dtype=np.uint8)
    return struct.pack(">II", 0x00000801, arr.size) + arr.tobytes()


def images_bytes(images):
    return np.asarray(images, dtype=np.uint8).tobytes()


@pytest.fixture
def idx_pair(tmp_path):
    """Two 2x3 images with distinct pixel values, plus labels [5, 0]."""
    images = np.array(
        [[[0, 51, 102], [153, 204, 255]],
         [[255, 0, 255], [0, 255, 0]]], dtype=np.uint8
    )
    labels = [5, 0]
    img_path = tmp_path / "imgs.idx"
    lab_path = tmp_path / "labs.idx"
    img_path.write_bytes(idx_image_bytes(images))
    lab_path.write_bytes(idx_label_bytes(labels))
    return img_path, lab_path, images, labels


# ---------------------------------------------------------------------------
# IDX parsing
# ---------------------------------------------------------------------------


def test_read_idx_hand_fixture(idx_pair):
    img_path, lab_path, images, labels = idx_pair
    data = read_idx(img_path, lab_path)
    assert data.features.shape == (2, 6)
    np.testing.assert_allclose(
        data.features, images.reshape(2, 6) / 255.0, atol=1e-15
    )
    np.testing.assert_array_equal(data.targets, labels)
    np.testing.assert_array_equal(data.feature_index_map, np.arange(6))


def test_read_idx_gzipped(idx_pair, tmp_path):
    img_path, lab_path, *_ = idx_pair
    gz_img = tmp_path / "imgs.idx.gz"
    gz_lab = tmp_path / "labs.idx.gz"
    gz_img.write_bytes(gzip.compress(img_path.read_bytes()))
    gz_lab.write_bytes(gzip.compress(lab_path.read_bytes()))
    plain = read_idx(img_path, lab_path)
    zipped = read_idx(gz_img, gz_lab)
    np.testing.assert_array_equal(plain.features, zipped.features)
    np.testing.assert_array_equal(plain.targets, zipped.targets)


def test_read_idx_bad_image_magic(idx_pair, tmp_path):
    _, lab_path, images, _ = idx_pair
    bad = struct.pack(">IIII", 0x00000804, 2, 2, 3) + images_bytes(images)
    path = tmp_path / "bad.idx"
    path.write_bytes(bad)
    with pytest.raises(DataFormatError, match="bad image magic 0x00000804 at offset 0"):
        read_idx(path, lab_path)


def test_read_idx_bad_label_magic(idx_pair, tmp_path):
    img_path, _, _, labels = idx_pair
    bad = struct.pack(">II", 0x00000777, 2) + bytes(labels)
    path = tmp_path / "bad.idx"
    path.write_bytes(bad)
    with pytest.raises(DataFormatError, match="bad label magic"):
        read_idx(img_path, path)


def test_read_idx_truncated_header(idx_pair, tmp_path):
    _, lab_path, *_ = idx_pair
    path = tmp_path / "short.idx"
    path.write_bytes(b"\x00\x00\x08\x03\x00")
    with pytest.raises(DataFormatError, match="truncated at offset 5"):
        read_idx(path, lab_path)


def test_read_idx_truncated_pixels(idx_pair, tmp_path):
    _, lab_path, images, _ = idx_pair
    whole = idx_image_bytes(images)
    path = tmp_path / "short.idx"
    path.write_bytes(whole[:-3])
    with pytest.raises(DataFormatError, match=f"expected {len(whole)} bytes"):
        read_idx(path, lab_path)


def test_read_idx_truncated_labels(idx_pair, tmp_path):
    img_path, lab_path, *_ = idx_pair
    whole = lab_path.read_bytes()
    path = tmp_path / "short.idx"
    path.write_bytes(whole[:-1])
    with pytest.raises(DataFormatError, match="label file truncated"):
        read_idx(img_path, path)


def test_read_idx_count_mismatch(idx_pair, tmp_path):
    img_path, _, _, _ = idx_pair
    path = tmp_path / "three.idx"
    path.write_bytes(idx_label_bytes([1, 2, 3]))
    with pytest.raises(DataFormatError, match="count mismatch: 2 images .* 3 labels"):
        read_idx(img_path, path)


@pytest.mark.skipif(not MNIST_DIR.exists(), reason="MNIST files not vendored")
def test_mnist_training_split_has_717_nonconstant_pixels():
    data = read_idx(
        MNIST_DIR / "train-images-idx3-ubyte.gz",
        MNIST_DIR / "train-labels-idx1-ubyte.gz",
    )
    assert data.features.shape == (60_000, 784)
    assert data.features.min() == 0.0 and data.features.max() == 1.0
    assert set(np.unique(data.targets)) == set(range(10))
    filtered = filter_features(data, drop_constant=True)
    assert filtered.n_features == 717
    # survivors keep their original pixel positions
    assert filtered.feature_index_map.min() >= 0
    assert filtered.feature_index_map.max() < 784


# ---------------------------------------------------------------------------
# CSV parsing
# ---------------------------------------------------------------------------


def write_csv(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_read_csv_regression_basic(tmp_path):
    path = write_csv(tmp_path, "a,b,act\n1,2,3\n4,5,6\n")
    data = read_csv_regression(path, "act")
    np.testing.assert_array_equal(data.features, [[1.0, 2.0], [4.0, 5.0]])
    np.testing.assert_array_equal(data.targets, [3.0, 6.0])


def test_read_csv_target_not_last_column(tmp_path):
    path = write_csv(tmp_path, "act,a,b\n3,1,2\n")
    data = read_csv_regression(path, "act")
    np.testing.assert_array_equal(data.features, [[1.0, 2.0]])
    np.testing.assert_array_equal(data.targets, [3.0])


def test_read_csv_missing_target_column(tmp_path):
    path = write_csv(tmp_path, "a,b\n1,2\n")
    with pytest.raises(ConfigurationError, match="'act' not in header"):
        read_csv_regression(path, "act")


def test_read_csv_ragged_row_named(tmp_path):
    path = write_csv(tmp_path, "a,b,act\n1,2,3\n4,5\n")
    with pytest.raises(DataFormatError, match="row 2: expected 3 fields, got 2"):
        read_csv_regression(path, "act")


def test_read_csv_non_numeric_cell_named(tmp_path):
    path = write_csv(tmp_path, "a,b,act\n1,oops,3\n")
    with pytest.raises(DataFormatError, match="row 1, column 'b'"):
        read_csv_regression(path, "act")


def test_read_csv_rejects_nan_cell(tmp_path):
    path = write_csv(tmp_path, "a,b,act\n1,nan,3\n")
    with pytest.raises(DataFormatError, match="NaN"):
        read_csv_regression(path, "act")


def test_read_csv_empty_and_header_only(tmp_path):
    with pytest.raises(DataFormatError, match="empty file"):
        read_csv_regression(write_csv(tmp_path, "", "e.csv"), "act")
    with pytest.raises(DataFormatError, match="no data rows"):
        read_csv_regression(write_csv(tmp_path, "a,act\n", "h.csv"), "act")


# ---------------------------------------------------------------------------
# Dataset validation
# ---------------------------------------------------------------------------


def test_dataset_validates_shapes_and_map():
    with pytest.raises(DimensionError):
        Dataset(np.zeros(3), np.zeros(3))
    with pytest.raises(DimensionError):
        Dataset(np.zeros((3, 2)), np.zeros(4))
    with pytest.raises(DimensionError):
        Dataset(np.zeros((3, 2)), np.zeros(3), feature_index_map=np.array([0]))
    with pytest.raises(ConfigurationError, match="strictly increasing"):
        Dataset(np.zeros((3, 2)), np.zeros(3), feature_index_map=np.array([1, 1]))


def test_dataset_rejects_nan():
    with pytest.raises(DataFormatError, match="NaN"):
        Dataset(np.array([[1.0, np.nan]]), np.zeros(1))
    with pytest.raises(DataFormatError, match="NaN"):
        Dataset(np.ones((1, 2)), np.array([np.nan]))


# ---------------------------------------------------------------------------
# filtering
# ---------------------------------------------------------------------------


def filter_fixture():
    # col0: active in 3 rows; col1: active in 1; col2: constant nonzero;
    # col3: all zeros; col4: active in 2 rows, varying
    x = np.array(
        [
            [1.0, 0.0, 5.0, 0.0, 0.0],
            [2.0, 0.0, 5.0, 0.0, 7.0],
            [3.0, 4.0, 5.0, 0.0, 8.0],
        ]
    )
    return Dataset(x, np.zeros(3))


def test_filter_min_active_boundary():
    data = filter_fixture()
    np.testing.assert_array_equal(
        filter_features(data, min_active=2).feature_index_map, [0, 2, 4]
    )
    np.testing.assert_array_equal(
        filter_features(data, min_active=3).feature_index_map, [0, 2]
    )
    np.testing.assert_array_equal(
        filter_features(data, min_active=0).feature_index_map, [0, 1, 2, 3, 4]
    )


def test_filter_drop_constant():
    data = filter_fixture()
    out = filter_features(data, drop_constant=True)
    # constant nonzero col2 and all-zero col3 both go
    np.testing.assert_array_equal(out.feature_index_map, [0, 1, 4])
    np.testing.assert_array_equal(out.features, data.features[:, [0, 1, 4]])


def test_filter_composes_and_is_idempotent():
    data = filter_fixture()
    once = filter_features(data, min_active=2, drop_constant=True)
    np.testing.assert_array_equal(once.feature_index_map, [0, 4])
    twice = filter_features(once, min_active=2, drop_constant=True)
    np.testing.assert_array_equal(twice.features, once.features)
    np.testing.assert_array_equal(twice.feature_index_map, once.feature_index_map)


def test_filter_rejects_wiping_out_everything():
    data = filter_fixture()
    with pytest.raises(DataFormatError, match="no features survive"):
        filter_features(data, min_active=4)
    with pytest.raises(ConfigurationError):
        filter_features(data, min_active=-1)


# ---------------------------------------------------------------------------
# standardization
# ---------------------------------------------------------------------------


def split_fixture():
    rng = np.random.default_rng(6)
    train = Dataset(rng.normal(3.0, 2.0, size=(40, 4)), rng.random(40))
    test = Dataset(rng.normal(-1.0, 0.5, size=(10, 4)), rng.random(10))
    return train, test


def test_standardize_train_columns_centered_and_scaled():
    train, _ = split_fixture()
    out = standardize(train)
    np.testing.assert_allclose(out.features.mean(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(out.features.std(axis=0), 1.0, atol=1e-12)
    assert out.normalization["kind"] == "standardize"
    np.testing.assert_array_equal(out.normalization["mean"], train.features.mean(axis=0))


def test_standardize_test_split_uses_train_statistics():
    train, test = split_fixture()
    out = standardize(test, stats_from=train)
    mean = train.features.mean(axis=0)
    std = train.features.std(axis=0)
    np.testing.assert_allclose(out.features, (test.features - mean) / std, atol=1e-12)
    # the splits genuinely differ, so the transformed test set is NOT centered
    assert np.abs(out.features.mean(axis=0)).min() > 0.5


def test_standardize_is_identity_on_standardized_data():
    train, _ = split_fixture()
    once = standardize(train)
    again = standardize(once)
    np.testing.assert_allclose(again.features, once.features, atol=1e-12)


def test_standardize_zero_variance_names_original_column():
    x = np.array([[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]])
    data = Dataset(x, np.zeros(3), feature_index_map=np.array([10, 42]))
    with pytest.raises(ConfigurationError, match="feature 42.*drop_constant"):
        standardize(data)


def test_standardize_requires_matching_columns():
    train, test = split_fixture()
    narrowed = apply_feature_selection(test, np.array([0, 1, 2]))
    with pytest.raises(DimensionError):
        standardize(narrowed, stats_from=train)


# ---------------------------------------------------------------------------
# cross-split column selection
# ---------------------------------------------------------------------------


def test_apply_feature_selection_round_trip():
    train, test = split_fixture()
    kept = apply_feature_selection(test, np.array([1, 3]))
    np.testing.assert_array_equal(kept.features, test.features[:, [1, 3]])
    np.testing.assert_array_equal(kept.feature_index_map, [1, 3])


def test_apply_feature_selection_mirrors_training_filter():
    # Filter the train split, then restrict the test split to the same
    # original columns; the column identities line up.
    train = filter_fixture()
    test = Dataset(train.features + 1.0, np.ones(3))
    kept_train = filter_features(train, drop_constant=True)
    kept_test = apply_feature_selection(test, kept_train.feature_index_map)
    np.testing.assert_array_equal(
        kept_test.feature_index_map, kept_train.feature_index_map
    )
    np.testing.assert_array_equal(
        kept_test.features, test.features[:, [0, 1, 4]]
    )


def test_apply_feature_selection_slices_normalization():
    train, test = split_fixture()
    z = standardize(test, stats_from=train)
    kept = apply_feature_selection(z, np.array([0, 2]))
    np.testing.assert_array_equal(
        kept.normalization["mean"], z.normalization["mean"][[0, 2]]
    )


def test_apply_feature_selection_unknown_columns():
    train, _ = split_fixture()
    with pytest.raises(ConfigurationError, match="absent"):
        apply_feature_selection(train, np.array([2, 9]))


def test_take_first_rows():
    train, _ = split_fixture()
    head = take(train, 5)
    assert head.n_samples == 5
    np.testing.assert_array_equal(head.features, train.features[:5])
    np.testing.assert_array_equal(head.feature_index_map, train.feature_index_map)
    with pytest.raises(ConfigurationError):
        take(train, 0)

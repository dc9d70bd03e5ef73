import struct

import numpy as np
import pytest

from core.errors import ConfigError, DimensionError, ParseError
from dataio.cifar import PIXELS, load_cifar, read_cifar_records, write_cifar
from dataio.dataset import Dataset
from dataio.idx import IMAGE_MAGIC, LABEL_MAGIC, load_idx, read_idx_images, read_idx_labels, write_idx
from dataio.transforms import filter_classes, permute_pixels, pixel_permutation, rotate_images


def _signed_images(n: int = 3, side: int = 6, seed: int = 0) -> Dataset:
    rng = np.random.default_rng(seed)
    images = rng.uniform(-1.0, 1.0, size=(n, 1, side, side))
    return Dataset(images, np.arange(n) % 2, "toy", 2, {"kind": "unit_interval_signed"})


def test_idx_header_layout(tmp_path):
    path = write_idx(tmp_path / "images-idx3-ubyte", np.arange(24, dtype=np.uint8).reshape(2, 3, 4))
    raw = path.read_bytes()
    assert struct.unpack(">IIII", raw[:16]) == (IMAGE_MAGIC, 2, 3, 4)
    assert raw[16:] == bytes(range(24))


def test_idx_pair_loads_into_signed_unit_range(tmp_path):
    pixels = np.array([[[0, 255], [51, 102]]], dtype=np.uint8)
    write_idx(tmp_path / "img.gz", pixels)
    write_idx(tmp_path / "lbl", np.array([7], dtype=np.uint8))
    ds = load_idx(tmp_path / "img.gz", tmp_path / "lbl")
    assert ds.images.shape == (1, 1, 2, 2)
    np.testing.assert_allclose(ds.images[0, 0], [[-1.0, 1.0], [-0.6, -0.2]], atol=1e-12)
    assert ds.labels.tolist() == [7]
    assert ds.num_classes == 10


def test_idx_truncated_payload_reports_offset(tmp_path):
    path = write_idx(tmp_path / "img", np.zeros((2, 4, 4), dtype=np.uint8))
    path.write_bytes(path.read_bytes()[:-5])
    with pytest.raises(ParseError) as info:
        read_idx_images(path)
    assert info.value.details["offset"] == 16 + 32 - 5


def test_idx_truncated_header(tmp_path):
    path = tmp_path / "lbl"
    path.write_bytes(struct.pack(">I", LABEL_MAGIC))
    with pytest.raises(ParseError) as info:
        read_idx_labels(path)
    assert info.value.details["offset"] == 4


def test_idx_bad_magic(tmp_path):
    path = write_idx(tmp_path / "lbl", np.arange(3, dtype=np.uint8))
    with pytest.raises(ParseError):
        read_idx_images(path)


def test_idx_count_mismatch(tmp_path):
    write_idx(tmp_path / "img", np.zeros((2, 2, 2), dtype=np.uint8))
    write_idx(tmp_path / "lbl", np.zeros(3, dtype=np.uint8))
    with pytest.raises(DimensionError):
        load_idx(tmp_path / "img", tmp_path / "lbl")


@pytest.mark.parametrize("variant,label_bytes", [("c10", 1), ("c100", 2)])
def test_cifar_record_offsets(tmp_path, variant, label_bytes):
    pixels = np.arange(2 * PIXELS, dtype=np.int64).reshape(2, 3, 32, 32) % 251
    labels = np.array([3, 9])
    path = write_cifar(tmp_path / "batch.bin", pixels, labels, variant, coarse=np.array([1, 2]))
    raw = path.read_bytes()
    record = label_bytes + PIXELS
    assert len(raw) == 2 * record
    assert raw[record + label_bytes - 1] == 9
    # red plane first, row-major
    assert raw[label_bytes] == pixels[0, 0, 0, 0]
    assert raw[label_bytes + 1024] == pixels[0, 1, 0, 0]
    got_pixels, got_labels = read_cifar_records(path, variant)
    np.testing.assert_array_equal(got_labels, labels)
    np.testing.assert_array_equal(got_pixels, pixels.astype(np.uint8))


def test_cifar_rejects_partial_record(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(bytes(PIXELS + 5))
    with pytest.raises(ParseError):
        read_cifar_records(path, "c10")


def test_cifar_channels_are_standardized(tmp_path):
    rng = np.random.default_rng(1)
    pixels = rng.integers(0, 256, size=(6, 3, 32, 32))
    path = write_cifar(tmp_path / "b.bin", pixels, np.arange(6), "c10")
    ds = load_cifar(path, "c10")
    np.testing.assert_allclose(ds.images.mean(axis=(0, 2, 3)), 0.0, atol=1e-10)
    np.testing.assert_allclose(ds.images.std(axis=(0, 2, 3)), 1.0, atol=1e-10)
    # test split reuses the training statistics
    reused = load_cifar(path, "c10", stats=ds.normalization)
    np.testing.assert_array_equal(reused.images, ds.images)


def test_rotation_by_ninety_degrees_matches_rot90():
    ds = _signed_images()
    rotated = rotate_images(ds, 90.0)
    np.testing.assert_allclose(rotated.images, np.rot90(ds.images, k=1, axes=(2, 3)), atol=1e-9)


def test_rotation_zero_is_identity_and_background_is_kept():
    ds = _signed_images()
    assert rotate_images(ds, 0.0) is ds
    blank = Dataset(np.full((1, 1, 5, 5), -1.0), np.zeros(1), "blank", 1, {"kind": "unit_interval_signed"})
    np.testing.assert_allclose(rotate_images(blank, 33.0).images, -1.0, atol=1e-12)
    with pytest.raises(ConfigError):
        rotate_images(ds, 10.0, mode="cubic")


def test_pixel_permutation_is_a_seeded_bijection():
    perm = pixel_permutation(36, seed=4)
    assert sorted(perm.tolist()) == list(range(36))
    np.testing.assert_array_equal(perm, pixel_permutation(36, seed=4))
    np.testing.assert_array_equal(pixel_permutation(5, None), np.arange(5))
    ds = _signed_images()
    permuted = permute_pixels(ds, 4)
    inverse = np.argsort(perm)
    np.testing.assert_array_equal(permuted.features[:, inverse], ds.features)
    assert permute_pixels(ds, None) is ds


def test_filter_classes():
    ds = Dataset(np.zeros((10, 1, 1, 1)), np.arange(10) % 5, "toy", 5)
    kept = filter_classes(ds, [1, 3])
    assert kept.class_counts() == {1: 2, 3: 2}
    assert kept.num_classes == 5
    remapped = filter_classes(ds, [3, 1], remap=True)
    assert sorted(set(remapped.labels.tolist())) == [0, 1]
    assert remapped.num_classes == 2
    with pytest.raises(ConfigError):
        filter_classes(ds, [])


def test_dataset_validates_shapes():
    with pytest.raises(DimensionError):
        Dataset(np.zeros((3, 1, 2, 2)), np.zeros(2))
    with pytest.raises(DimensionError):
        Dataset(np.zeros((3, 4)), np.zeros(3))
    ds = Dataset(np.zeros((3, 1, 2, 2)), np.array([0, 2, 1]))
    assert ds.num_classes == 3 and ds.image_shape == (1, 2, 2)
    assert ds.head(2).labels.tolist() == [0, 2]

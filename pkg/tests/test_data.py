import gzip
import struct

import numpy as np
import pytest

from glrnet.data import (
    IMAGE_MAGIC,
    LABEL_MAGIC,
    SampleSet,
    default_mnist_paths,
    downsample,
    encode_target,
    load_idx,
    load_mnist,
    make_dataset,
    parse_idx_images,
    parse_idx_labels,
    write_idx,
)
from glrnet.errors import ConfigurationError, FormatError, StructuralError


def test_one_image_idx_round_trip(tmp_path):
    img = np.arange(784, dtype=np.uint8).reshape(1, 28, 28)
    img[0, 0, 0], img[0, 0, 1] = 0, 255
    write_idx(tmp_path / "i.idx", tmp_path / "l.idx", img, [7])
    images, labels = load_idx(tmp_path / "i.idx", tmp_path / "l.idx")
    assert images.shape == (1, 28, 28) and labels.tolist() == [7]
    assert images[0, 0, 0] == 0.0 and images[0, 0, 1] == 1.0
    assert np.array_equal(np.rint(images * 255).astype(np.uint8), img)


def test_gzipped_idx_is_detected(tmp_path):
    img = np.zeros((2, 28, 28), dtype=np.uint8)
    write_idx(tmp_path / "i.gz", tmp_path / "l.gz", img, [1, 2])
    assert (tmp_path / "i.gz").read_bytes()[:2] == b"\x1f\x8b"
    assert load_idx(tmp_path / "i.gz", tmp_path / "l.gz")[1].tolist() == [1, 2]


def test_bad_magic_truncation_and_count_name_the_field(tmp_path):
    good = struct.pack(">iiii", IMAGE_MAGIC, 1, 28, 28) + bytes(784)
    with pytest.raises(FormatError, match="magic"):
        parse_idx_images(struct.pack(">iiii", LABEL_MAGIC, 1, 28, 28) + bytes(784))
    with pytest.raises(FormatError, match="pixels"):
        parse_idx_images(good[:-1])
    with pytest.raises(FormatError, match="header"):
        parse_idx_images(good[:10])
    with pytest.raises(FormatError, match="magic"):
        parse_idx_labels(struct.pack(">ii", IMAGE_MAGIC, 1) + b"\x00")
    with pytest.raises(FormatError, match="labels"):
        parse_idx_labels(struct.pack(">ii", LABEL_MAGIC, 3) + b"\x00")
    (tmp_path / "i").write_bytes(good)
    (tmp_path / "l").write_bytes(struct.pack(">ii", LABEL_MAGIC, 2) + b"\x00\x01")
    with pytest.raises(FormatError, match="count"):
        load_idx(tmp_path / "i", tmp_path / "l")


def test_downsample_examples():
    assert np.all(downsample(np.full((28, 28), 0.3)) == 0.3)
    img = np.zeros((28, 28))
    img[1, :2] = 1.0                       # block (0, 0, 1, 1)
    assert downsample(img)[0, 0] == 0.5
    checker = (np.indices((28, 28)).sum(axis=0) % 2).astype(float)
    assert np.all(downsample(checker) == 0.5)
    with pytest.raises(StructuralError):
        downsample(np.zeros((27, 28)))


def test_encode_target():
    assert encode_target(2).tolist() == [0, 0, 1, 0, 0, 0, 0, 0, 0, 0]
    assert encode_target(0)[0] == 1 and encode_target(0).sum() == 1
    assert encode_target(9)[9] == 1 and encode_target(9).sum() == 1
    with pytest.raises(ConfigurationError):
        encode_target(10)
    with pytest.raises(ConfigurationError):
        encode_target(-1)


def _fake_images(n, seed=0):
    rng = np.random.default_rng(seed)
    return rng.uniform(0, 1, (n, 28, 28)), rng.integers(0, 10, n)


def test_make_dataset_split_and_invariants():
    images, labels = _fake_images(10_500)
    ds = make_dataset(images, labels, seed=3)
    assert len(ds.train) == 6000 and len(ds.test) == 4000
    for s in (ds.train, ds.test):
        assert s.x.shape[1] == 197
        assert np.all(s.x[:, 0] == 1.0)
        assert s.pixels.min() >= 0 and s.pixels.max() <= 1
        assert np.array_equal(np.argmax(s.targets, axis=1), s.labels)
    # disjoint by pool index: every pooled image is distinct here
    keys = {row.tobytes() for row in ds.train.x} & {row.tobytes() for row in ds.test.x}
    assert not keys
    again = make_dataset(images, labels, seed=3)
    assert np.array_equal(again.train.x, ds.train.x) and again.provenance == ds.provenance
    other = make_dataset(images, labels, seed=4)
    assert not np.array_equal(other.train.x, ds.train.x)


def test_make_dataset_needs_enough_images():
    images, labels = _fake_images(50)
    with pytest.raises(ConfigurationError):
        make_dataset(images, labels, seed=0)


def test_reduced_takes_heads():
    images, labels = _fake_images(10_000)
    ds = make_dataset(images, labels, seed=0)
    small = ds.reduced(100, 40)
    assert len(small.train) == 100 and len(small.test) == 40
    assert np.array_equal(small.train.x, ds.train.x[:100])


def test_sample_set_shape_check():
    with pytest.raises(StructuralError):
        SampleSet(np.ones((3, 197)), [1, 2])


def test_bundled_pool_ingests():
    img, lab = default_mnist_paths()
    ds = load_mnist(img, lab, seed=0)
    assert len(ds.train) == 6000 and len(ds.test) == 4000
    counts = np.bincount(ds.train.labels, minlength=10)
    assert counts.min() > 400
    assert np.all(ds.train.x[:, 0] == 1.0)
    assert 0.0 <= ds.train.pixels.min() and ds.train.pixels.max() <= 1.0


def test_mnist_dir_env_override(tmp_path, monkeypatch):
    monkeypatch.setenv("GLRNET_MNIST_DIR", str(tmp_path))
    assert default_mnist_paths()[0].parent == tmp_path

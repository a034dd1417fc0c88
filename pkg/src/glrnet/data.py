"""MNIST ingestion: IDX parsing, 2x2 downsampling, splitting and one-hot targets."""

from __future__ import annotations

import gzip
import hashlib
import os
import struct
from dataclasses import dataclass, field
from os import PathLike
from pathlib import Path

import numpy as np

from . import seeding
from .errors import ConfigurationError, FormatError, StructuralError

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
N_CLASSES = 10


def _read(path) -> bytes:
    path = Path(path)
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def parse_idx_images(raw: bytes) -> np.ndarray:
    """Decode an IDX3 image blob to a ``uint8`` array of shape ``(n, rows, cols)``."""
    if len(raw) < 16:
        raise FormatError(f"header: image file has {len(raw)} bytes, need at least 16")
    magic, n, rows, cols = struct.unpack(">iiii", raw[:16])
    if magic != IMAGE_MAGIC:
        raise FormatError(f"magic: expected {IMAGE_MAGIC:#010x} for images, got {magic:#010x}")
    expected = n * rows * cols
    if len(raw) - 16 < expected:
        raise FormatError(f"pixels: truncated, expected {expected} bytes, got {len(raw) - 16}")
    return np.frombuffer(raw, dtype=np.uint8, count=expected, offset=16).reshape(n, rows, cols)


def parse_idx_labels(raw: bytes) -> np.ndarray:
    if len(raw) < 8:
        raise FormatError(f"header: label file has {len(raw)} bytes, need at least 8")
    magic, n = struct.unpack(">ii", raw[:8])
    if magic != LABEL_MAGIC:
        raise FormatError(f"magic: expected {LABEL_MAGIC:#010x} for labels, got {magic:#010x}")
    if len(raw) - 8 < n:
        raise FormatError(f"labels: truncated, expected {n} bytes, got {len(raw) - 8}")
    return np.frombuffer(raw, dtype=np.uint8, count=n, offset=8).copy()


def load_idx(images_path, labels_path) -> tuple[np.ndarray, np.ndarray]:
    """Read an IDX image/label pair (optionally gzipped).

    Returns float images in [0, 1] of shape ``(n, 28, 28)`` and integer labels.
    """
    images = parse_idx_images(_read(images_path))
    labels = parse_idx_labels(_read(labels_path))
    if len(images) != len(labels):
        raise FormatError(f"count: {len(images)} images but {len(labels)} labels")
    return images.astype(np.float64) / 255.0, labels.astype(np.int64)


def write_idx(images_path, labels_path, images: np.ndarray, labels: np.ndarray) -> None:
    """Write ``uint8`` images ``(n, rows, cols)`` and labels as IDX; ``.gz`` paths are gzipped."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    n, rows, cols = images.shape
    blobs = {
        images_path: struct.pack(">iiii", IMAGE_MAGIC, n, rows, cols) + images.tobytes(),
        labels_path: struct.pack(">ii", LABEL_MAGIC, len(labels)) + labels.tobytes(),
    }
    for path, blob in blobs.items():
        if str(path).endswith(".gz"):
            blob = gzip.compress(blob, mtime=0)
        with open(path, "wb") as f:
            f.write(blob)


def downsample(images) -> np.ndarray:
    """2x2 average pooling, ``(..., 28, 28) -> (..., 14, 14)``."""
    images = np.asarray(images, dtype=np.float64)
    if images.shape[-2:] != (28, 28):
        raise StructuralError(f"expected 28x28 images, got {images.shape[-2:]}")
    blocks = images.reshape(images.shape[:-2] + (14, 2, 14, 2))
    return blocks.mean(axis=(-3, -1))


def encode_target(label, n_classes: int = N_CLASSES) -> np.ndarray:
    """One-hot vector(s) of length ``n_classes``."""
    label = np.asarray(label)
    if np.any((label < 0) | (label >= n_classes)):
        raise ConfigurationError(f"labels must lie in 0..{n_classes - 1}, got {label}")
    return np.eye(n_classes)[label]


def add_bias(pixels) -> np.ndarray:
    """Prepend the constant-1 bias slot to flat pixel vectors."""
    pixels = np.asarray(pixels, dtype=np.float64)
    out = np.empty(pixels.shape[:-1] + (pixels.shape[-1] + 1,))
    out[..., 0] = 1.0
    out[..., 1:] = pixels
    return out


@dataclass
class SampleSet:
    """Bias-prefixed inputs ``x`` of shape ``(n, 197)`` with integer labels."""

    x: np.ndarray
    labels: np.ndarray
    n_classes: int = N_CLASSES

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.x.ndim != 2 or len(self.x) != len(self.labels):
            raise StructuralError(f"{self.x.shape} inputs for {self.labels.shape} labels")

    def __len__(self):
        return len(self.labels)

    @property
    def targets(self) -> np.ndarray:
        return encode_target(self.labels, self.n_classes)

    @property
    def pixels(self) -> np.ndarray:
        return self.x[:, 1:]

    def head(self, n: int) -> "SampleSet":
        return SampleSet(self.x[:n], self.labels[:n], self.n_classes)

    def take(self, index) -> "SampleSet":
        return SampleSet(self.x[index], self.labels[index], self.n_classes)


@dataclass
class Dataset:
    train: SampleSet
    test: SampleSet
    provenance: dict = field(default_factory=dict)

    def reduced(self, n_train: int, n_test: int) -> "Dataset":
        prov = dict(self.provenance, n_train=n_train, n_test=n_test)
        return Dataset(self.train.head(n_train), self.test.head(n_test), prov)


def make_dataset(images, labels, seed: int, pool_size: int = 10_000,
                 train_fraction: float = 0.6, source: dict | None = None) -> Dataset:
    """Draw a seeded pool of raw 28x28 images, split it, and convert to samples.

    The pool is a uniform draw without replacement; the first
    ``train_fraction`` of the shuffled pool becomes the training set.
    """
    images = np.asarray(images)
    labels = np.asarray(labels)
    if len(images) < pool_size:
        raise ConfigurationError(f"need at least {pool_size} images, got {len(images)}")
    order = seeding.derive(seed, seeding.DATA).permutation(len(images))[:pool_size]
    n_train = int(round(train_fraction * pool_size))
    x = add_bias(downsample(images[order]).reshape(pool_size, -1))
    y = labels[order]
    prov = {
        "seed": int(seed),
        "pool_size": pool_size,
        "train_fraction": train_fraction,
        "pool_digest": hashlib.sha256(order.astype("<i8").tobytes()).hexdigest()[:16],
        **(source or {}),
    }
    return Dataset(SampleSet(x[:n_train], y[:n_train]), SampleSet(x[n_train:], y[n_train:]), prov)


def load_mnist(images_path, labels_path, seed: int, pool_size: int = 10_000,
               train_fraction: float = 0.6) -> Dataset:
    images, labels = load_idx(images_path, labels_path)
    source = {"images": str(images_path), "labels": str(labels_path)}
    return make_dataset(images, labels, seed, pool_size, train_fraction, source)


DEFAULT_MNIST = Path(__file__).resolve().parents[2] / "data" / "mnist"


def default_mnist_paths(root: str | PathLike | None = None) -> tuple[Path, Path]:
    """IDX files of the bundled 10000-image pool; ``$GLRNET_MNIST_DIR`` overrides the folder."""
    if root is None:
        root = os.environ.get("GLRNET_MNIST_DIR", DEFAULT_MNIST)
    root = Path(root)
    return root / "mnist10k-images-idx3-ubyte.gz", root / "mnist10k-labels-idx1-ubyte.gz"

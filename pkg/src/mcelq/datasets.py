"""Dataset loading: IDX image files and synthetic Gaussian blobs.

IDX is the classic big-endian format used by the small image
classification sets (magic 0x00000803 for images, 0x00000801 for
labels). Nothing here downloads anything; point MCEL_DATA_DIR or
--data-dir at a directory that already holds the files.
"""

from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (ContractError, DataFormatError, IdxCountError,
                     IdxMagicError, IdxTruncatedError)

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801

DATA_DIR_ENV = "MCEL_DATA_DIR"

# file names and md5 checksums of the compressed FashionMNIST distribution
FASHION_FILES = (
    ("train-images-idx3-ubyte.gz", "8d4fb7e6c68d591d4c3dfef9ec88bf0d"),
    ("train-labels-idx1-ubyte.gz", "25c81989df183df01b3e8a0aad5dffbe"),
    ("t10k-images-idx3-ubyte.gz", "bef4ecab320f06d8554ea6380940ec79"),
    ("t10k-labels-idx1-ubyte.gz", "bb300cfdad3c16e7a12a480ee83cd310"),
)

BLOBS_CLASSES = 10
BLOBS_DIM = 32
BLOBS_TRAIN_PER_CLASS = 250
BLOBS_TEST_PER_CLASS = 50
BLOBS_SPREAD = 0.45
SIMPLEX_SCALE = 2.0


@dataclass
class Dataset:
    """Flat float inputs in [0, 1] with integer class labels."""

    inputs: np.ndarray
    labels: np.ndarray
    num_classes: int
    name: str = ""

    def __post_init__(self) -> None:
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.inputs.ndim != 2:
            raise ContractError("inputs must be 2-d, got shape %r" % (self.inputs.shape,))
        if self.labels.shape != (self.inputs.shape[0],):
            raise ContractError("labels shape %r does not match %d samples"
                                % (self.labels.shape, self.inputs.shape[0]))
        if self.inputs.size and (self.inputs.min() < 0.0 or self.inputs.max() > 1.0):
            raise ContractError("inputs must be scaled into [0, 1]")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ContractError("labels must lie in [0, %d)" % self.num_classes)

    @property
    def num_samples(self) -> int:
        return self.inputs.shape[0]

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]


def _open_maybe_gzip(path: Path):
    if str(path).endswith(".gz"):
        return gzip.open(path, "rb")
    return open(path, "rb")


def _read_exact(f, nbytes: int, path: Path) -> bytes:
    data = f.read(nbytes)
    if len(data) < nbytes:
        raise IdxTruncatedError("%s: file ends %d bytes short" % (path, nbytes - len(data)))
    return data


def load_idx(images_path, labels_path) -> Dataset:
    """Parse an IDX image/label file pair into a dataset.

    Pixels are scaled by 1/255 into [0, 1] and flattened row-major, one
    row per image.
    """
    images_path = Path(images_path)
    labels_path = Path(labels_path)
    with _open_maybe_gzip(images_path) as f:
        magic, = struct.unpack(">I", _read_exact(f, 4, images_path))
        if magic != IMAGE_MAGIC:
            raise IdxMagicError("%s: expected image magic 0x%08x, got 0x%08x"
                                % (images_path, IMAGE_MAGIC, magic))
        count, rows, cols = struct.unpack(">III", _read_exact(f, 12, images_path))
        raw = _read_exact(f, count * rows * cols, images_path)
    with _open_maybe_gzip(labels_path) as f:
        magic, = struct.unpack(">I", _read_exact(f, 4, labels_path))
        if magic != LABEL_MAGIC:
            raise IdxMagicError("%s: expected label magic 0x%08x, got 0x%08x"
                                % (labels_path, LABEL_MAGIC, magic))
        label_count, = struct.unpack(">I", _read_exact(f, 4, labels_path))
        if label_count != count:
            raise IdxCountError("%d labels for %d images" % (label_count, count))
        labels = np.frombuffer(_read_exact(f, label_count, labels_path), dtype=np.uint8)
    pixels = np.frombuffer(raw, dtype=np.uint8).astype(np.float64) / 255.0
    inputs = pixels.reshape(count, rows * cols)
    labels = labels.astype(np.int64)
    num_classes = int(labels.max()) + 1 if labels.size else 0
    return Dataset(inputs, labels, num_classes, name=images_path.name)


def data_dir(explicit: str | None = None) -> Path:
    """Resolve the dataset directory: flag first, then MCEL_DATA_DIR, then cwd."""
    if explicit:
        return Path(explicit)
    env = os.environ.get(DATA_DIR_ENV)
    if env:
        return Path(env)
    return Path(".")


def _find_idx_file(root: Path, gz_name: str) -> Path | None:
    candidate = root / gz_name
    if candidate.exists():
        return candidate
    plain = root / gz_name[:-3]
    if plain.exists():
        return plain
    return None


def expected_fashion_files(root: Path) -> str:
    lines = ["expected files under %s (gzipped or unpacked):" % root]
    for name, checksum in FASHION_FILES:
        lines.append("  %s  md5 %s" % (root / name, checksum))
    return "\n".join(lines)


def load_fashion(root: Path, split: str) -> Dataset:
    """Load one FashionMNIST split from IDX files already on disk."""
    if split not in ("train", "test"):
        raise ContractError("split must be 'train' or 'test', got %r" % (split,))
    prefix = "train" if split == "train" else "t10k"
    images = _find_idx_file(root, "%s-images-idx3-ubyte.gz" % prefix)
    labels = _find_idx_file(root, "%s-labels-idx1-ubyte.gz" % prefix)
    if images is None or labels is None:
        raise DataFormatError(
            "FashionMNIST files not found.\n%s" % expected_fashion_files(root))
    ds = load_idx(images, labels)
    ds.name = "fashion-%s" % split
    ds.num_classes = 10
    return ds


def _simplex_centers(num_classes: int, dim: int) -> np.ndarray:
    """Class centers on a scaled axis-aligned simplex, mirrored past dim."""
    centers = np.zeros((num_classes, dim))
    for k in range(num_classes):
        centers[k, k % dim] = SIMPLEX_SCALE if k < dim else -SIMPLEX_SCALE
    return centers


def synthetic_blobs(num_classes: int, per_class: int, dim: int,
                    spread: float, seed: int) -> Dataset:
    """Seeded Gaussian clusters, min-max scaled into [0, 1].

    As spread shrinks the clusters collapse onto their centers and the
    classes become perfectly separable.
    """
    if num_classes < 2 or per_class < 1 or dim < 1:
        raise ContractError("blobs need >= 2 classes, >= 1 sample, >= 1 dim")
    if num_classes > 2 * dim:
        raise ContractError("at most 2 * dim blob classes fit, got %d" % num_classes)
    if not spread > 0.0:
        raise ContractError("spread must be > 0, got %r" % (spread,))
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    centers = _simplex_centers(num_classes, dim)
    inputs = np.repeat(centers, per_class, axis=0)
    inputs = inputs + rng.normal(0.0, spread, size=inputs.shape)
    labels = np.repeat(np.arange(num_classes), per_class)
    lo, hi = inputs.min(), inputs.max()
    span = hi - lo if hi > lo else 1.0
    inputs = (inputs - lo) / span
    return Dataset(inputs, labels, num_classes,
                   name="blobs%dx%d" % (num_classes, per_class))


def blobs_split(seed: int, split: str) -> Dataset:
    """The stock blob task: train and test draws from disjoint streams."""
    if split == "train":
        child = np.random.SeedSequence(seed, spawn_key=(101,)).generate_state(1)[0]
        return synthetic_blobs(BLOBS_CLASSES, BLOBS_TRAIN_PER_CLASS, BLOBS_DIM,
                               BLOBS_SPREAD, int(child))
    if split == "test":
        child = np.random.SeedSequence(seed, spawn_key=(102,)).generate_state(1)[0]
        return synthetic_blobs(BLOBS_CLASSES, BLOBS_TEST_PER_CLASS, BLOBS_DIM,
                               BLOBS_SPREAD, int(child))
    raise ContractError("split must be 'train' or 'test', got %r" % (split,))

"""
Dataset module for the wireless DSGD simulator.
Parses MNIST IDX files, builds synthetic classification data and splits samples across nodes.
"""

import gzip
import os
import struct
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from src.errors import (
    DatasetIOError,
    IdxFormatError,
    InconsistentFilesError,
    InvalidArgumentError,
)
from src.logger import logger
from src.topology import SeedLike, make_rng

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801

# Canonical file stems; `.gz` variants are accepted too.
MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature matrix (samples x features) with integer class labels."""

    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        if self.features.shape[0] != self.labels.shape[0]:
            raise InvalidArgumentError(
                f"{self.features.shape[0]} feature rows but {self.labels.shape[0]} labels"
            )
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise InvalidArgumentError(f"labels must lie in [0, {self.num_classes})")

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def num_features(self) -> int:
        return int(self.features.shape[1])

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(features=self.features[idx], labels=self.labels[idx], num_classes=self.num_classes)


def _open(path: str):
    return gzip.open(path, "rb") if path.endswith(".gz") else open(path, "rb")


def _read_exact(stream, size: int, path: str) -> bytes:
    data = stream.read(size)
    if len(data) != size:
        raise DatasetIOError(f"{path}: truncated file (wanted {size} bytes, got {len(data)})")
    return data


def _read_idx(path: str, magic: int, ndim: int) -> Tuple[Tuple[int, ...], np.ndarray]:
    """Header check plus raw uint8 payload of one IDX file."""
    try:
        with _open(path) as f:
            (found,) = struct.unpack(">I", _read_exact(f, 4, path))
            if found != magic:
                raise IdxFormatError(f"{path}: bad magic number 0x{found:08x}, expected 0x{magic:08x}")
            dims = struct.unpack(">" + "I" * ndim, _read_exact(f, 4 * ndim, path))
            size = int(np.prod(dims))
            payload = np.frombuffer(_read_exact(f, size, path), dtype=np.uint8)
    except (IdxFormatError, DatasetIOError):
        raise
    except OSError as e:
        raise DatasetIOError(f"{path}: {e}") from e
    return dims, payload


def load_mnist_idx(images_path: str, labels_path: str) -> Dataset:
    """Parse an IDX image/label file pair; pixels are scaled to [0, 1] and flattened."""
    (count, rows, cols), pixels = _read_idx(images_path, IMAGES_MAGIC, 3)
    (label_count,), labels = _read_idx(labels_path, LABELS_MAGIC, 1)

    if count != label_count:
        raise InconsistentFilesError(
            f"{images_path} has {count} images but {labels_path} has {label_count} labels"
        )

    features = pixels.reshape(count, rows * cols).astype(np.float64) / 255.0
    logger.debug(f"Loaded {count} samples of {rows}x{cols} from {images_path}")
    return Dataset(features=features, labels=labels.astype(np.int64), num_classes=10)


def _resolve(data_dir: str, stem: str) -> str:
    for candidate in (stem, stem + ".gz"):
        path = os.path.join(data_dir, candidate)
        if os.path.exists(path):
            return path
    raise DatasetIOError(f"{stem}(.gz) not found in {data_dir}")


def mnist_available(data_dir: str) -> bool:
    try:
        for stems in MNIST_FILES.values():
            for stem in stems:
                _resolve(data_dir, stem)
    except DatasetIOError:
        return False
    return True


def load_mnist(data_dir: str, split: str = "train", limit: Optional[int] = None) -> Dataset:
    """Load the train or test split from `data_dir`, keeping the first `limit` samples."""
    if split not in MNIST_FILES:
        raise InvalidArgumentError(f"split must be one of {tuple(MNIST_FILES)}, got {split!r}")
    images_stem, labels_stem = MNIST_FILES[split]
    dataset = load_mnist_idx(_resolve(data_dir, images_stem), _resolve(data_dir, labels_stem))
    if limit is not None and limit < len(dataset):
        dataset = dataset.subset(np.arange(limit))
    return dataset


def synthetic_classification(
    samples: int,
    features: int,
    classes: int,
    seed: SeedLike,
    spread: float = 1.0,
) -> Dataset:
    """Gaussian clusters around random class means; a stand-in when MNIST is absent."""
    if samples < 1 or features < 1 or classes < 2:
        raise InvalidArgumentError("need samples >= 1, features >= 1 and classes >= 2")
    rng = make_rng(seed)
    means = rng.normal(scale=2.0, size=(classes, features))
    labels = rng.integers(0, classes, size=samples)
    x = means[labels] + spread * rng.standard_normal((samples, features))
    return Dataset(features=x, labels=labels.astype(np.int64), num_classes=classes)


def partition_iid(dataset: Dataset, n: int, seed: SeedLike) -> List[np.ndarray]:
    """Shuffle once, then cut into n contiguous near-equal index blocks."""
    total = len(dataset)
    if n < 1:
        raise InvalidArgumentError(f"n must be >= 1, got {n}")
    if n > total:
        raise InvalidArgumentError(f"cannot split {total} samples across {n} nodes")
    order = make_rng(seed).permutation(total)
    return np.array_split(order, n)

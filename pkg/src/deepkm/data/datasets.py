"""In-memory image classification datasets (MNIST and a synthetic pattern set)."""

from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np
from numpy.typing import NDArray

from deepkm.core.exceptions import ContractViolation, FormatError
from deepkm.data.idx import load_idx

# MNIST is fetched out of band, e.g. from https://yann.lecun.com/exdb/mnist/
MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}

SYNTHETIC_CLASSES = 4
SYNTHETIC_SIZE = 16


@dataclass(frozen=True)
class Dataset:
    """Images as (n, c, h, w) reals in [0, 1] and their class indexes."""

    images: NDArray[np.float64]
    labels: NDArray[np.int64]
    num_classes: int
    split: str = "train"

    def __post_init__(self) -> None:
        if self.images.ndim != 4:
            raise ContractViolation(f"images must be (n, c, h, w), got {self.images.shape}")
        if self.images.shape[0] != self.labels.shape[0]:
            raise ContractViolation(
                f"{self.images.shape[0]} images but {self.labels.shape[0]} labels"
            )
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ContractViolation(f"labels outside [0, {self.num_classes})")

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def input_shape(self) -> tuple[int, int, int]:
        _, c, h, w = self.images.shape
        return (c, h, w)

    def head(self, limit: int | None) -> "Dataset":
        """First ``limit`` samples (all when None)."""
        if limit is None or limit >= len(self):
            return self
        return Dataset(self.images[:limit], self.labels[:limit], self.num_classes, self.split)


def _find(directory: Path, stem: str) -> Path:
    for candidate in (directory / stem, directory / f"{stem}.gz"):
        if candidate.exists():
            return candidate
    raise FormatError(f"missing MNIST file {stem}[.gz] in {directory}")


def load_mnist(
    directory: Path, split: Literal["train", "test"], limit: int | None = None
) -> Dataset:
    images_name, labels_name = MNIST_FILES[split]
    images = load_idx(_find(directory, images_name), "images")
    labels = load_idx(_find(directory, labels_name), "labels")
    if images.shape[0] != labels.shape[0]:
        raise FormatError(f"{images.shape[0]} images but {labels.shape[0]} labels in {directory}")
    dataset = Dataset(
        images=images[:, None, :, :].astype(np.float64) / 255.0,
        labels=labels.astype(np.int64),
        num_classes=10,
        split=split,
    )
    return dataset.head(limit)


def _pattern(label: int, size: int) -> NDArray[np.float64]:
    grid = np.indices((size, size))
    rows, cols = grid[0], grid[1]
    if label == 0:
        img = (rows % 4 < 2).astype(np.float64)  # horizontal bars
    elif label == 1:
        img = (cols % 4 < 2).astype(np.float64)  # vertical bars
    elif label == 2:
        img = ((rows + cols) % 4 < 2).astype(np.float64)  # diagonal stripes
    else:
        edge = (rows < 2) | (rows >= size - 2) | (cols < 2) | (cols >= size - 2)
        img = edge.astype(np.float64)  # frame
    return img


def synthetic_dataset(n: int, seed: int = 0, split: str = "train") -> Dataset:
    """Deterministic 4-class 16x16 pattern set with random shifts and noise."""
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, SYNTHETIC_CLASSES, size=n)
    images = np.empty((n, 1, SYNTHETIC_SIZE, SYNTHETIC_SIZE))
    for i, label in enumerate(labels):
        img = _pattern(int(label), SYNTHETIC_SIZE)
        img = np.roll(img, shift=tuple(rng.integers(0, 4, size=2)), axis=(0, 1))
        noisy = 0.8 * img + 0.2 * rng.random((SYNTHETIC_SIZE, SYNTHETIC_SIZE))
        images[i, 0] = np.clip(noisy, 0.0, 1.0)
    return Dataset(
        images=images, labels=labels.astype(np.int64), num_classes=SYNTHETIC_CLASSES, split=split
    )

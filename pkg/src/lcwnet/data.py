"""Datasets: synthetic Gaussian blobs and the CIFAR-10/100 binary format.

Inputs are stored sample-first: ``(n, features)`` or ``(n, channels, h, w)``.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .linalg import Rng, qr_thin

CIFAR_SIDE = 32
CIFAR_PIXELS = 3 * CIFAR_SIDE * CIFAR_SIDE
CIFAR10_TRAIN = [f"data_batch_{i}.bin" for i in range(1, 6)]
CIFAR10_TEST = ["test_batch.bin"]
CIFAR100_TRAIN = ["train.bin"]
CIFAR100_TEST = ["test.bin"]
DATA_ROOT_ENV = "LCWNET_DATA_ROOT"


class DatasetError(IOError):
    pass


@dataclass
class Dataset:
    inputs: np.ndarray
    labels: np.ndarray
    classes: int
    norm_mean: np.ndarray | None = field(default=None, repr=False)
    norm_std: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.inputs.shape[0] != self.labels.shape[0]:
            raise ValueError(
                f"{self.inputs.shape[0]} inputs but {self.labels.shape[0]} labels"
            )

    def __len__(self):
        return self.labels.shape[0]

    @property
    def normalized(self) -> bool:
        return self.norm_mean is not None

    @property
    def feature_shape(self) -> tuple[int, ...]:
        return self.inputs.shape[1:]

    def subset(self, idx) -> "Dataset":
        return replace(self, inputs=self.inputs[idx], labels=self.labels[idx])


def _norm_axes(x: np.ndarray) -> tuple[int, ...]:
    # per feature for vectors, per channel for images
    return (0,) if x.ndim == 2 else (0, 2, 3)


def normalize(train: Dataset, *others: Dataset) -> list[Dataset]:
    """Standardize with statistics of ``train``; applies to every dataset given."""
    if train.normalized or any(d.normalized for d in others):
        raise ValueError("dataset is already normalized")
    axes = _norm_axes(train.inputs)
    mean = train.inputs.mean(axis=axes, keepdims=True)
    std = train.inputs.std(axis=axes, keepdims=True)
    std = np.where(std > 0, std, 1.0)
    out = []
    for d in (train, *others):
        x = d.inputs - mean
        x /= std
        out.append(replace(d, inputs=x, norm_mean=mean.squeeze(), norm_std=std.squeeze()))
    return out


@dataclass
class SyntheticSpec:
    classes: int = 10
    dim: int = 128
    samples_per_class: int = 500
    separation: float = 4.0  # distance between class centres, in units of noise std
    noise: float = 1.0

    def validate(self):
        if self.classes < 2:
            raise ValueError("synthetic data needs at least 2 classes")
        if self.dim < self.classes:
            raise ValueError(f"dim ({self.dim}) must be >= classes ({self.classes})")
        if self.samples_per_class < 1 or self.noise <= 0 or self.separation < 0:
            raise ValueError("samples_per_class >= 1, noise > 0 and separation >= 0 required")


def make_synthetic(spec: SyntheticSpec, rng: Rng) -> Dataset:
    """Gaussian blobs whose centres are pairwise ``separation * noise`` apart.

    Centres sit on scaled coordinate axes, then a random rotation is applied,
    so the class structure is not axis aligned. Samples are interleaved by
    class (sample ``i`` has label ``i % classes``).
    """
    spec.validate()
    k, d, n = spec.classes, spec.dim, spec.samples_per_class
    rotation, _ = qr_thin(rng.normal(0.0, 1.0, (d, d)))
    centres = np.zeros((k, d))
    centres[np.arange(k), np.arange(k)] = spec.separation * spec.noise / np.sqrt(2.0)
    centres = centres @ rotation.T
    labels = np.tile(np.arange(k), n)
    inputs = centres[labels] + rng.normal(0.0, spec.noise, (k * n, d))
    return Dataset(inputs, labels, k)


def split(data: Dataset, test_fraction: float, rng: Rng) -> tuple[Dataset, Dataset]:
    if not 0 < test_fraction < 1:
        raise ValueError("test_fraction must be in (0, 1)")
    order = rng.permutation(len(data))
    n_test = int(round(len(data) * test_fraction))
    return data.subset(np.sort(order[n_test:])), data.subset(np.sort(order[:n_test]))


def read_cifar_file(path, label_bytes: int = 1, label_offset: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Parse one binary batch: records of label byte(s) + 3072 pixel bytes (R, G, B planes).

    For CIFAR-100 (``label_bytes=2``) the byte at ``label_offset`` is used
    (0 = coarse, 1 = fine).
    """
    images, labels = _read_cifar_bytes(path, label_bytes, label_offset)
    return images.astype(np.float64), labels


def _read_cifar_bytes(path, label_bytes: int, label_offset: int) -> tuple[np.ndarray, np.ndarray]:
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"missing CIFAR file: {path}")
    raw = np.fromfile(path, dtype=np.uint8)
    record = label_bytes + CIFAR_PIXELS
    if raw.size == 0 or raw.size % record:
        whole = raw.size // record * record
        raise DatasetError(
            f"truncated CIFAR file {path}: {raw.size} bytes is not a multiple of the "
            f"{record}-byte record; last complete record ends at byte offset {whole}"
        )
    recs = raw.reshape(-1, record)
    labels = recs[:, label_offset].astype(np.int64)
    images = recs[:, label_bytes:].reshape(-1, 3, CIFAR_SIDE, CIFAR_SIDE)
    return images, labels


def resolve_root(root) -> Path:
    if root is None:
        root = os.environ.get(DATA_ROOT_ENV)
        if root is None:
            raise DatasetError(f"no dataset directory given and ${DATA_ROOT_ENV} is unset")
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"dataset directory does not exist: {root}")
    return root


def load_cifar10(root=None, variant: str = "cifar10") -> tuple[Dataset, Dataset]:
    """Load train/test splits, normalized by train-split channel mean and std.

    ``variant='cifar100'`` reads ``train.bin``/``test.bin`` with 2 label bytes
    and uses the fine label.
    """
    root = resolve_root(root)
    if variant == "cifar10":
        files, label_bytes, classes = (CIFAR10_TRAIN, CIFAR10_TEST), 1, 10
    elif variant == "cifar100":
        files, label_bytes, classes = (CIFAR100_TRAIN, CIFAR100_TEST), 2, 100
    else:
        raise ValueError(f"unknown CIFAR variant {variant!r}")
    parts = []
    for names in files:
        # concatenate as bytes, convert once: keeps the peak near one float copy
        chunks = [_read_cifar_bytes(root / name, label_bytes, label_bytes - 1) for name in names]
        parts.append(Dataset(np.concatenate([c[0] for c in chunks]).astype(np.float64),
                             np.concatenate([c[1] for c in chunks]), classes))
    train, test = normalize(*parts)
    return train, test


def augment_batch(images: np.ndarray, rng: Rng, pad: int = 4) -> np.ndarray:
    """Random crop after zero padding plus random horizontal flip."""
    n, c, h, w = images.shape
    padded = np.pad(images, [(0, 0), (0, 0), (pad, pad), (pad, pad)])
    dy = rng.integers(2 * pad + 1, n)
    dx = rng.integers(2 * pad + 1, n)
    flip = rng.uniform(0.0, 1.0, n) < 0.5
    out = np.empty_like(images)
    for i in range(n):
        crop = padded[i, :, dy[i]:dy[i] + h, dx[i]:dx[i] + w]
        out[i] = crop[:, :, ::-1] if flip[i] else crop
    return out


def to_network_input(x: np.ndarray) -> np.ndarray:
    """Sample-first vectors become ``(features, batch)`` columns; images pass through."""
    return np.ascontiguousarray(x.T) if x.ndim == 2 else x

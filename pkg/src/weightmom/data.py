"""Dataset ingestion: IDX (MNIST), CIFAR binary batches, and a synthetic toy set."""

from __future__ import annotations

import os
import struct

import numpy as np

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801

CIFAR10_RECORD = 1 + 3072
CIFAR100_RECORD = 2 + 3072


class DataFormatError(ValueError):
    """File contents disagree with the format's header/record arithmetic."""


def load_idx(path):
    """Parse one IDX file.

    Image files (magic 0x00000803) return a float64 array of shape
    (count, rows, cols) scaled to [0, 1]; label files (magic 0x00000801)
    return an int64 vector.
    """
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 8:
        raise DataFormatError(f"{path}: file too short for an IDX header")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic == IDX_IMAGE_MAGIC:
        if len(raw) < 16:
            raise DataFormatError(f"{path}: truncated image header")
        count, rows, cols = struct.unpack(">III", raw[4:16])
        expected = 16 + count * rows * cols
        if len(raw) != expected:
            raise DataFormatError(
                f"{path}: expected {expected} bytes, got {len(raw)}")
        pixels = np.frombuffer(raw, dtype=np.uint8, offset=16)
        return pixels.reshape(count, rows, cols).astype(np.float64) / 255.0
    if magic == IDX_LABEL_MAGIC:
        (count,) = struct.unpack(">I", raw[4:8])
        expected = 8 + count
        if len(raw) != expected:
            raise DataFormatError(
                f"{path}: expected {expected} bytes, got {len(raw)}")
        return np.frombuffer(raw, dtype=np.uint8, offset=8).astype(np.int64)
    raise DataFormatError(f"{path}: bad IDX magic 0x{magic:08x} at offset 0")


def load_cifar(path, variant="cifar10"):
    """Parse one CIFAR binary batch file.

    Returns (images, labels): images are float64 (count, 3, 32, 32) in
    [0, 1]; cifar100 uses the fine label (second label byte).
    """
    if variant == "cifar10":
        record, num_classes = CIFAR10_RECORD, 10
    elif variant == "cifar100":
        record, num_classes = CIFAR100_RECORD, 100
    else:
        raise ValueError(f"unknown CIFAR variant: {variant!r}")
    with open(path, "rb") as f:
        raw = np.frombuffer(f.read(), dtype=np.uint8)
    if raw.size == 0 or raw.size % record != 0:
        raise DataFormatError(
            f"{path}: {raw.size} bytes is not a multiple of the "
            f"{record}-byte record size")
    rows = raw.reshape(-1, record)
    labels = rows[:, record - 3073].astype(np.int64)
    if labels.max(initial=0) >= num_classes:
        raise DataFormatError(
            f"{path}: label {labels.max()} out of range for {num_classes} classes")
    images = rows[:, record - 3072:].reshape(-1, 3, 32, 32)
    return images.astype(np.float64) / 255.0, labels


def synthetic_dataset(seed=0, n_samples=1000, dim=8, train_fraction=0.8):
    """Two-Gaussian binary toy problem, linearly separable to ~99.9% accuracy.

    Class means sit at +/- 3/sqrt(dim) per coordinate (6 sigma apart overall).
    Returns (x_train, y_train, x_test, y_test).
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x73796e]))
    mean = np.full(dim, 3.0 / np.sqrt(dim))
    labels = rng.integers(0, 2, size=n_samples)
    x = rng.standard_normal((n_samples, dim)) + np.where(
        labels[:, None] == 1, mean, -mean)
    n_train = int(n_samples * train_fraction)
    return (x[:n_train], labels[:n_train], x[n_train:], labels[n_train:])


def _find_mnist_file(root, stems):
    for stem in stems:
        p = os.path.join(root, stem)
        if os.path.exists(p):
            return p
    raise FileNotFoundError(f"none of {stems} found under {root}")


def load_dataset(name, path=None, seed=0, flatten=False):
    """Load a full dataset by name.

    Returns (x_train, y_train, x_test, y_test, input_shape, num_classes).
    mnist expects the four standard IDX files under `path`; cifar10/cifar100
    expect the standard binary batch files under `path`.
    """
    if name == "synthetic":
        x_tr, y_tr, x_te, y_te = synthetic_dataset(seed)
        return x_tr, y_tr, x_te, y_te, (x_tr.shape[1],), 2
    if path is None:
        raise ValueError(f"dataset {name!r} requires a data path")
    if name == "mnist":
        x_tr = load_idx(_find_mnist_file(
            path, ["train-images-idx3-ubyte", "train-images.idx3-ubyte"]))
        y_tr = load_idx(_find_mnist_file(
            path, ["train-labels-idx1-ubyte", "train-labels.idx1-ubyte"]))
        x_te = load_idx(_find_mnist_file(
            path, ["t10k-images-idx3-ubyte", "t10k-images.idx3-ubyte"]))
        y_te = load_idx(_find_mnist_file(
            path, ["t10k-labels-idx1-ubyte", "t10k-labels.idx1-ubyte"]))
        x_tr = x_tr[:, None, :, :]
        x_te = x_te[:, None, :, :]
        shape = (1, x_tr.shape[2], x_tr.shape[3])
        num_classes = 10
    elif name in ("cifar10", "cifar100"):
        if name == "cifar10":
            train_files = [os.path.join(path, f"data_batch_{i}.bin")
                           for i in range(1, 6)]
            test_files = [os.path.join(path, "test_batch.bin")]
        else:
            train_files = [os.path.join(path, "train.bin")]
            test_files = [os.path.join(path, "test.bin")]
        train_parts = [load_cifar(f, name) for f in train_files if os.path.exists(f)]
        test_parts = [load_cifar(f, name) for f in test_files if os.path.exists(f)]
        if not train_parts or not test_parts:
            raise FileNotFoundError(f"no {name} batch files under {path}")
        x_tr = np.concatenate([p[0] for p in train_parts])
        y_tr = np.concatenate([p[1] for p in train_parts])
        x_te = np.concatenate([p[0] for p in test_parts])
        y_te = np.concatenate([p[1] for p in test_parts])
        shape = (3, 32, 32)
        num_classes = 10 if name == "cifar10" else 100
    else:
        raise ValueError(f"unknown dataset: {name!r}")
    if flatten:
        x_tr = x_tr.reshape(len(x_tr), -1)
        x_te = x_te.reshape(len(x_te), -1)
        shape = (x_tr.shape[1],)
    return x_tr, y_tr, x_te, y_te, shape, num_classes

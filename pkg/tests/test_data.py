import struct

import numpy as np
import pytest

from weightmom.data import (DataFormatError, load_cifar, load_dataset,
                            load_idx, synthetic_dataset)


def write_idx_images(path, images):
    images = np.asarray(images, dtype=np.uint8)
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, *images.shape))
        f.write(images.tobytes())


def write_idx_labels(path, labels):
    labels = np.asarray(labels, dtype=np.uint8)
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(labels.tobytes())


class TestIdx:
    def test_images_parse_and_scale(self, tmp_path):
        rng = np.random.default_rng(0)
        raw = rng.integers(0, 256, size=(10, 28, 28))
        path = tmp_path / "images"
        write_idx_images(path, raw)
        images = load_idx(path)
        assert images.shape == (10, 28, 28)
        assert images.reshape(10, 784).shape[1] == 784
        assert images.min() >= 0.0 and images.max() <= 1.0
        assert np.allclose(images * 255.0, raw)

    def test_labels_parse(self, tmp_path):
        path = tmp_path / "labels"
        write_idx_labels(path, list(range(10)))
        labels = load_idx(path)
        assert labels.tolist() == list(range(10))
        assert labels.min() >= 0 and labels.max() <= 9

    def test_truncated_file_reports_byte_counts(self, tmp_path):
        path = tmp_path / "images"
        write_idx_images(path, np.zeros((4, 5, 5), dtype=np.uint8))
        full = path.read_bytes()
        path.write_bytes(full[:len(full) // 2])
        with pytest.raises(DataFormatError, match=r"expected 116 bytes, got 58"):
            load_idx(path)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bogus"
        path.write_bytes(struct.pack(">III", 0xdeadbeef, 1, 1))
        with pytest.raises(DataFormatError, match="magic"):
            load_idx(path)


class TestCifar:
    def test_cifar10_record_arithmetic(self, tmp_path):
        n = 100
        rng = np.random.default_rng(1)
        records = np.empty((n, 3073), dtype=np.uint8)
        records[:, 0] = rng.integers(0, 10, size=n)
        records[:, 1:] = rng.integers(0, 256, size=(n, 3072))
        path = tmp_path / "batch.bin"
        path.write_bytes(records.tobytes())
        images, labels = load_cifar(path, "cifar10")
        assert images.shape == (n, 3, 32, 32)
        assert np.array_equal(labels, records[:, 0])
        assert images.max() <= 1.0

    def test_cifar100_uses_fine_label(self, tmp_path):
        records = np.zeros((5, 3074), dtype=np.uint8)
        records[:, 0] = 3           # coarse label, ignored
        records[:, 1] = [7, 42, 0, 99, 13]
        path = tmp_path / "train.bin"
        path.write_bytes(records.tobytes())
        _, labels = load_cifar(path, "cifar100")
        assert labels.tolist() == [7, 42, 0, 99, 13]

    def test_wrong_length_rejected(self, tmp_path):
        path = tmp_path / "batch.bin"
        path.write_bytes(b"\x00" * 5000)
        with pytest.raises(DataFormatError, match="record size"):
            load_cifar(path, "cifar10")

    def test_out_of_range_label_rejected(self, tmp_path):
        records = np.zeros((2, 3073), dtype=np.uint8)
        records[1, 0] = 10
        path = tmp_path / "batch.bin"
        path.write_bytes(records.tobytes())
        with pytest.raises(DataFormatError, match="label"):
            load_cifar(path, "cifar10")


class TestSynthetic:
    def test_shapes_and_split(self):
        x_tr, y_tr, x_te, y_te = synthetic_dataset(seed=5)
        assert x_tr.shape == (800, 8)
        assert x_te.shape == (200, 8)
        assert set(np.unique(np.concatenate([y_tr, y_te]))) <= {0, 1}

    def test_deterministic_per_seed(self):
        a = synthetic_dataset(seed=3)
        b = synthetic_dataset(seed=3)
        assert all(np.array_equal(x, y) for x, y in zip(a, b))
        c = synthetic_dataset(seed=4)
        assert not np.array_equal(a[0], c[0])

    def test_linearly_separable_by_logistic_regression(self):
        # independent oracle: plain batch gradient-descent logistic regression
        x_tr, y_tr, x_te, y_te = synthetic_dataset(seed=1)
        w = np.zeros(x_tr.shape[1])
        b = 0.0
        for _ in range(300):
            z = x_tr @ w + b
            p = 1.0 / (1.0 + np.exp(-z))
            grad_w = x_tr.T @ (p - y_tr) / len(y_tr)
            grad_b = float(np.mean(p - y_tr))
            w -= 0.5 * grad_w
            b -= 0.5 * grad_b
        acc = np.mean(((x_te @ w + b) > 0).astype(int) == y_te)
        assert acc > 0.95


def test_load_dataset_synthetic_shapes():
    x_tr, y_tr, x_te, y_te, shape, classes = load_dataset("synthetic", seed=0)
    assert shape == (8,)
    assert classes == 2


def test_load_dataset_unknown_name():
    with pytest.raises(ValueError):
        load_dataset("imagenet")

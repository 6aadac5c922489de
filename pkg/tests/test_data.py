import gzip
import struct

import numpy as np
import pytest
from hypothesis import given, strategies as st

from padpfl import data as D
from padpfl.errors import FormatError, InvalidParameterError

from conftest import write_idx


@pytest.fixture
def tiny_idx(tmp_path):
    imgs = np.arange(3 * 784, dtype=np.uint16).reshape(3, 784) % 256
    write_idx(tmp_path, "train", imgs, np.array([0, 9, 4]))
    return tmp_path


class TestIdx:
    def test_roundtrip(self, tiny_idx):
        b = D.load_mnist(tiny_idx / "train-images-idx3-ubyte", tiny_idx / "train-labels-idx1-ubyte")
        assert b.images.shape == (3, 784) and b.images.dtype == np.float64
        assert b.images.min() >= 0 and b.images.max() == 1.0
        assert b.images[0, 255] == 1.0 and list(b.labels) == [0, 9, 4]

    def test_gzip_transparent(self, tiny_idx):
        for name in ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"):
            raw = (tiny_idx / name).read_bytes()
            (tiny_idx / name).unlink()
            (tiny_idx / (name + ".gz")).write_bytes(gzip.compress(raw))
        b = D.load_mnist_split("train", tiny_idx)
        assert len(b) == 3

    def test_bad_image_magic(self, tmp_path):
        p = tmp_path / "img"
        p.write_bytes(struct.pack(">IIII", 2049, 1, 28, 28) + bytes(784))
        with pytest.raises(FormatError, match="magic"):
            D.read_idx_images(p)

    def test_bad_label_magic(self, tmp_path):
        p = tmp_path / "lbl"
        p.write_bytes(struct.pack(">II", 2051, 1) + bytes(1))
        with pytest.raises(FormatError, match="magic"):
            D.read_idx_labels(p)

    def test_truncated(self, tiny_idx):
        p = tiny_idx / "train-images-idx3-ubyte"
        p.write_bytes(p.read_bytes()[:-1])
        with pytest.raises(FormatError, match="truncated"):
            D.read_idx_images(p)
        with pytest.raises(FormatError, match="truncated"):
            D.read_idx_images(_short(tiny_idx))

    def test_count_mismatch(self, tiny_idx):
        lbl = tiny_idx / "train-labels-idx1-ubyte"
        lbl.write_bytes(struct.pack(">II", 2049, 2) + bytes([1, 2]))
        with pytest.raises(FormatError, match="labels"):
            D.load_mnist(tiny_idx / "train-images-idx3-ubyte", lbl)

    def test_label_range(self, tiny_idx):
        lbl = tiny_idx / "train-labels-idx1-ubyte"
        lbl.write_bytes(struct.pack(">II", 2049, 3) + bytes([1, 2, 10]))
        with pytest.raises(FormatError, match="outside"):
            D.load_mnist(tiny_idx / "train-images-idx3-ubyte", lbl)

    def test_missing_dir_env(self, monkeypatch):
        monkeypatch.delenv(D.MNIST_ENV, raising=False)
        with pytest.raises(FileNotFoundError):
            D.mnist_dir(None)


def _short(d):
    p = d / "short"
    p.write_bytes(b"\x00\x00\x08")
    return p


@pytest.mark.mnist
def test_full_mnist(mnist_path):
    train = D.load_mnist_split("train", mnist_path)
    test = D.load_mnist_split("test", mnist_path)
    assert train.images.shape == (60000, 784) and len(test) == 10000
    assert 0.0 <= train.images.min() and train.images.max() <= 1.0
    assert set(np.unique(train.labels)) == set(range(10))


class TestPartition:
    def test_scenario_sizes(self):
        labels = np.zeros(60000, dtype=int)
        p = D.partition(labels, [150] * 60, seed=0)
        assert sum(p.sizes) == 9000 and p.num_clients == 60
        sizes = [50] * 20 + [120] * 20 + [271] * 20
        q = D.partition(labels, sizes, seed=0)
        assert q.sizes == sizes and sum(q.sizes) == 8820

    def test_insufficient(self):
        with pytest.raises(InvalidParameterError):
            D.partition(np.zeros(10), [6, 5], seed=0)

    @given(st.lists(st.integers(1, 30), min_size=1, max_size=8), st.integers(0, 2**32 - 1))
    def test_disjoint_deterministic(self, sizes, seed):
        labels = np.arange(300) % 10
        p = D.partition(labels, sizes, seed=seed)
        q = D.partition(labels, sizes, seed=seed)
        flat = np.concatenate(p.client_indices)
        assert len(np.unique(flat)) == len(flat) == sum(sizes)
        assert flat.min() >= 0 and flat.max() < 300
        assert all(np.array_equal(a, b) for a, b in zip(p.client_indices, q.client_indices))

    def test_label_skew(self):
        labels = np.arange(3000) % 10
        p = D.partition(labels, [100] * 10, seed=1, label_skew=0.1)
        flat = np.concatenate(p.client_indices)
        assert len(np.unique(flat)) == 1000 and p.sizes == [100] * 10
        # Small concentration gives lopsided clients.
        top = [np.bincount(labels[ix], minlength=10).max() for ix in p.client_indices]
        assert np.mean(top) > 30


class TestSaltAndPepper:
    def images(self, n=6, seed=0):
        # Strictly inside (0, 1) so every replaced pixel is visible.
        return np.random.default_rng(seed).uniform(0.1, 0.9, (n, 784))

    def test_density_zero(self):
        x = self.images()
        assert np.array_equal(D.salt_and_pepper(x, 0.0, seed=1), x)

    def test_density_one(self):
        out = D.salt_and_pepper(self.images(), 1.0, seed=1)
        assert np.all((out == 0) | (out == 1))

    def test_exact_count(self):
        x = self.images()
        out = D.salt_and_pepper(x, 0.2, seed=1)
        assert list((out != x).sum(axis=1)) == [157] * len(x)

    @given(st.floats(0, 1), st.integers(0, 1000))
    def test_properties(self, density, seed):
        x = self.images(3, seed)
        out = D.salt_and_pepper(x, density, seed=seed)
        changed = out != x
        assert out.shape == x.shape
        assert np.all(changed.sum(axis=1) == round(density * 784))
        assert np.all((out[changed] == 0) | (out[changed] == 1))
        assert np.array_equal(out[~changed], x[~changed])
        assert np.array_equal(out, D.salt_and_pepper(x, density, seed=seed))

    def test_input_untouched(self):
        x = self.images()
        keep = x.copy()
        D.salt_and_pepper(x, 0.4, seed=2)
        assert np.array_equal(x, keep)

    def test_bad_density(self):
        with pytest.raises(InvalidParameterError):
            D.salt_and_pepper(self.images(), 1.5)

    def test_salt_pepper_balance(self):
        out = D.salt_and_pepper(self.images(200), 0.5, seed=3)
        ones = (out == 1).sum() / (out == 0).sum()
        assert 0.95 < ones < 1.05


def test_severity_defaults():
    assert D.corruption_density("severe") == 0.4
    assert D.corruption_density("moderate") == 0.2
    assert D.corruption_density("slight") == 0.05
    assert D.corruption_density("none") == 0.0
    assert D.corruption_density(0.3) == 0.3
    with pytest.raises(InvalidParameterError):
        D.corruption_density("extreme")

import os
import struct
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from padpfl.data import MNIST_ENV

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

_FALLBACK_MNIST = Path("/root/mnist")


def mnist_directory():
    d = os.environ.get(MNIST_ENV) or (str(_FALLBACK_MNIST) if _FALLBACK_MNIST.exists() else None)
    if d is None:
        return None
    stem = Path(d) / "train-labels-idx1-ubyte"
    return d if stem.exists() or stem.with_suffix(".gz").exists() else None


@pytest.fixture(scope="session")
def mnist_path():
    d = mnist_directory()
    if d is None:
        pytest.skip(f"MNIST not found; set {MNIST_ENV}")
    return d


def write_idx(directory: Path, prefix: str, images: np.ndarray, labels: np.ndarray):
    """Write uint8 images (n, 784) and labels in IDX format."""
    directory.mkdir(parents=True, exist_ok=True)
    n = len(labels)
    (directory / f"{prefix}-images-idx3-ubyte").write_bytes(
        struct.pack(">IIII", 2051, n, 28, 28) + images.astype(np.uint8).tobytes()
    )
    (directory / f"{prefix}-labels-idx1-ubyte").write_bytes(struct.pack(">II", 2049, n) + labels.astype(np.uint8).tobytes())


@pytest.fixture(scope="session")
def fake_mnist(tmp_path_factory):
    """A small synthetic MNIST directory: class k lights up a band of rows."""
    root = tmp_path_factory.mktemp("fake_mnist")
    rng = np.random.default_rng(123)

    def make(n):
        labels = rng.integers(0, 10, n)
        imgs = rng.integers(0, 40, (n, 784))
        for i, y in enumerate(labels):
            imgs[i, y * 78:(y + 1) * 78] = 200 + rng.integers(0, 55, 78)
        return imgs, labels

    write_idx(root, "train", *make(1200))
    write_idx(root, "t10k", *make(200))
    return str(root)


# -- acceptance reporting ----------------------------------------------------

_CRITERIA: dict[int, str] = {}


@pytest.fixture(scope="session")
def criterion_log():
    """``log(n, passed, detail)`` records one summary line per criterion."""

    def log(n, passed, detail):
        _CRITERIA[n] = f"criterion {n}: {'PASS' if passed else 'FAIL'}  {detail}"

    return log


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[n])

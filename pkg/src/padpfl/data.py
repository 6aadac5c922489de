"""MNIST ingestion, client partitioning and salt-and-pepper corruption."""

from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import FormatError, InvalidParameterError
from .model import Batch

IMAGES_MAGIC = 2051
LABELS_MAGIC = 2049

MNIST_ENV = "PADPFL_MNIST_DIR"
TRAIN_FILES = ("train-images-idx3-ubyte", "train-labels-idx1-ubyte")
TEST_FILES = ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")

SEVERITY_DENSITIES = {"none": 0.0, "slight": 0.05, "moderate": 0.2, "severe": 0.4}


def _read_bytes(path) -> bytes:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def read_idx_images(path) -> np.ndarray:
    """Raw ``uint8`` array of shape ``(n, rows * cols)``."""
    raw = _read_bytes(path)
    if len(raw) < 16:
        raise FormatError(f"{path}: truncated header")
    magic, n, rows, cols = struct.unpack(">IIII", raw[:16])
    if magic != IMAGES_MAGIC:
        raise FormatError(f"{path}: bad magic number {magic}, expected {IMAGES_MAGIC}")
    expected = n * rows * cols
    if len(raw) - 16 < expected:
        raise FormatError(f"{path}: truncated file, {len(raw) - 16} of {expected} pixel bytes")
    return np.frombuffer(raw, dtype=np.uint8, count=expected, offset=16).reshape(n, rows * cols)


def read_idx_labels(path) -> np.ndarray:
    raw = _read_bytes(path)
    if len(raw) < 8:
        raise FormatError(f"{path}: truncated header")
    magic, n = struct.unpack(">II", raw[:8])
    if magic != LABELS_MAGIC:
        raise FormatError(f"{path}: bad magic number {magic}, expected {LABELS_MAGIC}")
    if len(raw) - 8 < n:
        raise FormatError(f"{path}: truncated file, {len(raw) - 8} of {n} labels")
    return np.frombuffer(raw, dtype=np.uint8, count=n, offset=8).copy()


def load_mnist(images_path, labels_path) -> Batch:
    """Images scaled to [0, 1] as float64, labels as int64."""
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise FormatError(f"{images.shape[0]} images but {labels.shape[0]} labels")
    if labels.size and labels.max() > 9:
        raise FormatError(f"label {labels.max()} outside 0..9")
    return Batch(images.astype(np.float64) / 255.0, labels.astype(np.int64))


def _find(directory: Path, stem: str) -> Path:
    for name in (stem, stem + ".gz"):
        p = directory / name
        if p.exists():
            return p
    raise FileNotFoundError(f"{stem}[.gz] not found in {directory} (set ${MNIST_ENV})")


def mnist_dir(directory=None) -> Path:
    directory = directory or os.environ.get(MNIST_ENV)
    if not directory:
        raise FileNotFoundError(f"no MNIST directory given and ${MNIST_ENV} is unset")
    return Path(directory)


def load_mnist_split(split: str = "train", directory=None) -> Batch:
    d = mnist_dir(directory)
    files = TRAIN_FILES if split == "train" else TEST_FILES
    return load_mnist(_find(d, files[0]), _find(d, files[1]))


@dataclass(frozen=True)
class Partition:
    client_indices: tuple[np.ndarray, ...]

    @property
    def sizes(self) -> list[int]:
        return [len(ix) for ix in self.client_indices]

    @property
    def num_clients(self) -> int:
        return len(self.client_indices)


def partition(labels: np.ndarray, sizes: Sequence[int], seed=None, label_skew: float | None = None) -> Partition:
    """Disjoint random assignment of sample indices to clients.

    With ``label_skew`` set (a Dirichlet concentration), each client's label
    mix is drawn from ``Dir(label_skew)`` instead of the pooled distribution.
    """
    sizes = [int(m) for m in sizes]
    n = len(labels)
    if any(m < 1 for m in sizes):
        raise InvalidParameterError("every client needs at least one sample")
    if sum(sizes) > n:
        raise InvalidParameterError(f"requested {sum(sizes)} samples but the dataset holds {n}")
    rng = np.random.default_rng(seed)
    if label_skew is None:
        perm = rng.permutation(n)
        bounds = np.cumsum([0] + sizes)
        return Partition(tuple(np.sort(perm[a:b]) for a, b in zip(bounds[:-1], bounds[1:])))
    return _skewed_partition(np.asarray(labels), sizes, rng, label_skew)


def _skewed_partition(labels, sizes, rng, alpha) -> Partition:
    classes = np.unique(labels)
    pools = {c: list(rng.permutation(np.flatnonzero(labels == c))) for c in classes}
    out = []
    for m in sizes:
        mix = rng.dirichlet(np.full(len(classes), alpha))
        want = rng.multinomial(m, mix)
        chosen = []
        for c, k in zip(classes, want):
            take = min(k, len(pools[c]))
            chosen += [pools[c].pop() for _ in range(take)]
        # Classes that ran dry are backfilled from whatever is left.
        short = m - len(chosen)
        while short > 0:
            c = max(pools, key=lambda c: len(pools[c]))
            if not pools[c]:
                raise InvalidParameterError("insufficient samples for the requested sizes")
            chosen.append(pools[c].pop())
            short -= 1
        out.append(np.sort(np.asarray(chosen, dtype=np.int64)))
    return Partition(tuple(out))


def corruption_density(severity) -> float:
    """Accept a severity label or an explicit density."""
    if isinstance(severity, str):
        try:
            return SEVERITY_DENSITIES[severity]
        except KeyError:
            raise InvalidParameterError(f"unknown severity {severity!r}") from None
    d = float(severity)
    if not 0.0 <= d <= 1.0:
        raise InvalidParameterError(f"density must lie in [0, 1], got {d}")
    return d


def salt_and_pepper(images: np.ndarray, density: float, seed=None) -> np.ndarray:
    """Set exactly ``round(density * pixels)`` random pixels per image to 0 or 1."""
    if not 0.0 <= density <= 1.0:
        raise InvalidParameterError(f"density must lie in [0, 1], got {density}")
    out = np.array(images, dtype=np.float64, copy=True)
    n, d = out.shape
    k = int(round(density * d))
    if k == 0 or n == 0:
        return out
    rng = np.random.default_rng(seed)
    picks = np.argsort(rng.random((n, d)), axis=1)[:, :k]
    values = rng.integers(0, 2, size=(n, k)).astype(np.float64)
    np.put_along_axis(out, picks, values, axis=1)
    return out

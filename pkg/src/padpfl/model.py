"""One-hidden-layer ReLU/softmax classifier on a flat parameter vector.

Parameter layout (portable across checkpoints)::

    [ W1 (input x hidden, row-major) | b1 (hidden) | W2 (hidden x output, row-major) | b2 (output) ]

so that ``logits = relu(X @ W1 + b1) @ W2 + b2``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DivergenceError, InvalidParameterError


@dataclass(frozen=True)
class MLPShape:
    input: int = 784
    hidden: int = 64
    output: int = 10

    @property
    def size(self) -> int:
        return self.input * self.hidden + self.hidden + self.hidden * self.output + self.output

    @property
    def slices(self) -> dict[str, slice]:
        i, h, o = self.input, self.hidden, self.output
        a = i * h
        b = a + h
        c = b + h * o
        return {"W1": slice(0, a), "b1": slice(a, b), "W2": slice(b, c), "b2": slice(c, c + o)}

    def unpack(self, params: np.ndarray):
        """Views ``(W1, b1, W2, b2)`` into ``params``."""
        if params.ndim != 1 or params.size != self.size:
            raise InvalidParameterError(f"expected a flat vector of length {self.size}, got shape {params.shape}")
        s = self.slices
        return (
            params[s["W1"]].reshape(self.input, self.hidden),
            params[s["b1"]],
            params[s["W2"]].reshape(self.hidden, self.output),
            params[s["b2"]],
        )

    def init(self, rng: np.random.Generator) -> np.ndarray:
        """Glorot-uniform weights, zero biases."""
        params = np.zeros(self.size)
        s = self.slices
        for name, fan_in, fan_out in (("W1", self.input, self.hidden), ("W2", self.hidden, self.output)):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            params[s[name]] = rng.uniform(-limit, limit, size=fan_in * fan_out)
        return params


class Batch(NamedTuple):
    images: np.ndarray  # (n, input) in [0, 1]
    labels: np.ndarray  # (n,) integer classes

    def __len__(self):
        return len(self.labels)

    def subset(self, idx) -> "Batch":
        return Batch(self.images[idx], self.labels[idx])


def _check(shape: MLPShape, batch: Batch):
    x, y = batch
    if x.ndim != 2 or x.shape[1] != shape.input:
        raise InvalidParameterError(f"images must have {shape.input} columns, got shape {x.shape}")
    if y.shape != (x.shape[0],) or x.shape[0] < 1:
        raise InvalidParameterError(f"{x.shape[0]} images but labels of shape {y.shape}")
    if y.min() < 0 or y.max() >= shape.output:
        raise InvalidParameterError(f"labels must lie in [0, {shape.output - 1}]")


def _forward(shape: MLPShape, params: np.ndarray, x: np.ndarray):
    W1, b1, W2, b2 = shape.unpack(params)
    z1 = x @ W1 + b1
    a1 = np.maximum(z1, 0.0)
    logits = a1 @ W2 + b2
    logits = logits - logits.max(axis=1, keepdims=True)
    log_probs = logits - np.log(np.exp(logits).sum(axis=1, keepdims=True))
    return z1, a1, log_probs


def forward_loss(shape: MLPShape, params: np.ndarray, batch: Batch) -> float:
    """Mean softmax cross-entropy over the batch."""
    _check(shape, batch)
    _, _, log_probs = _forward(shape, params, batch.images)
    return float(-log_probs[np.arange(len(batch)), batch.labels].mean())


def loss_and_gradient(shape: MLPShape, params: np.ndarray, batch: Batch) -> tuple[float, np.ndarray]:
    _check(shape, batch)
    x, y = batch
    n = len(y)
    z1, a1, log_probs = _forward(shape, params, x)
    rows = np.arange(n)
    loss = float(-log_probs[rows, y].mean())

    d_logits = np.exp(log_probs)
    d_logits[rows, y] -= 1.0
    d_logits /= n
    _, _, W2, _ = shape.unpack(params)
    d_a1 = d_logits @ W2.T
    d_z1 = d_a1 * (z1 > 0)

    grad = np.empty_like(params)
    s = shape.slices
    grad[s["W1"]] = (x.T @ d_z1).ravel()
    grad[s["b1"]] = d_z1.sum(axis=0)
    grad[s["W2"]] = (a1.T @ d_logits).ravel()
    grad[s["b2"]] = d_logits.sum(axis=0)
    return loss, grad


def gradient(shape: MLPShape, params: np.ndarray, batch: Batch) -> np.ndarray:
    return loss_and_gradient(shape, params, batch)[1]


def prox_gradient(shape: MLPShape, params: np.ndarray, batch: Batch, anchor: np.ndarray, mu: float) -> np.ndarray:
    """Gradient of the proximal local objective ``l(x) + mu/2 ||x - anchor||^2``."""
    if anchor.shape != params.shape:
        raise InvalidParameterError(f"anchor shape {anchor.shape} != params shape {params.shape}")
    return gradient(shape, params, batch) + mu * (params - anchor)


def predict(shape: MLPShape, params: np.ndarray, images: np.ndarray) -> np.ndarray:
    return _forward(shape, params, images)[2].argmax(axis=1)


def accuracy(shape: MLPShape, params: np.ndarray, batch: Batch) -> float:
    return float(np.mean(predict(shape, params, batch.images) == batch.labels))


def loss_and_accuracy(shape: MLPShape, params: np.ndarray, batch: Batch) -> tuple[float, float]:
    _check(shape, batch)
    _, _, log_probs = _forward(shape, params, batch.images)
    loss = float(-log_probs[np.arange(len(batch)), batch.labels].mean())
    return loss, float(np.mean(log_probs.argmax(axis=1) == batch.labels))


def clip(params: np.ndarray, bound: float) -> np.ndarray:
    """Rescale onto the Euclidean ball of radius ``bound`` if outside it."""
    if not bound > 0:
        raise InvalidParameterError(f"clip bound must be positive, got {bound}")
    norm = float(np.linalg.norm(params))
    if norm <= bound:
        return params.copy()
    return params * (bound / norm)


def local_train(
    shape: MLPShape,
    start: np.ndarray,
    data: Batch,
    anchor: np.ndarray,
    mu: float,
    lr: float,
    epochs: int,
    batch_size: int | None = None,
    seed=None,
    anchor_grad: np.ndarray | None = None,
) -> tuple[np.ndarray, float]:
    """Mini-batch SGD on the proximal objective.

    ``batch_size=None`` means full-batch steps (one per epoch). Returns the
    trained parameters and the achieved inexactness
    ``||grad h(final)|| / ||grad h(anchor)||`` on the whole local dataset.
    ``anchor_grad`` may carry a precomputed full-data gradient at ``anchor``.
    """
    if lr < 0:
        raise InvalidParameterError(f"lr must be nonnegative, got {lr}")
    if epochs < 0:
        raise InvalidParameterError(f"epochs must be nonnegative, got {epochs}")
    _check(shape, data)
    n = len(data)
    if batch_size is None or batch_size >= n:
        batch_size = n
    rng = np.random.default_rng(seed)
    if anchor_grad is None:
        anchor_grad = gradient(shape, anchor, data)
    params = start.copy()
    reuse = batch_size == n and np.array_equal(start, anchor)
    for epoch in range(epochs):
        order = np.arange(n) if batch_size == n else rng.permutation(n)
        for lo in range(0, n, batch_size):
            if reuse:
                # First full-batch step from the anchor: gradient already known.
                g, reuse = anchor_grad, False
            else:
                mb = data if batch_size == n else data.subset(order[lo:lo + batch_size])
                loss, g = loss_and_gradient(shape, params, mb)
                if not np.isfinite(loss):
                    raise DivergenceError("non-finite local loss", epoch=epoch)
            params -= lr * (g + mu * (params - anchor))
        if not np.all(np.isfinite(params)):
            raise DivergenceError("non-finite parameters", epoch=epoch)

    g_end = prox_gradient(shape, params, data, anchor, mu)
    num, den = float(np.linalg.norm(g_end)), float(np.linalg.norm(anchor_grad))
    if den == 0.0:
        gamma = 0.0 if num == 0.0 else float("inf")
    else:
        gamma = num / den
    return params, gamma

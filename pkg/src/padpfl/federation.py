"""The personalized-aggregation DP round loop.

One round, for every client ``i`` and the current broadcast ``x~``:

1. proximal local training from ``x~`` (start and anchor),
2. clip to the ball of radius ``B``,
3. add ``N(0, sigma_C^2)`` per coordinate,
4. aggregate with the round's impact factors,
5. add ``N(0, sigma_S^2)`` per coordinate on the server.

Randomness comes from ``SeedSequence(seed, spawn_key=(stream, round, client))``
so results do not depend on the order in which clients are processed.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .accounting import NoiseCalibration, validate_impacts
from .errors import DivergenceError, InvalidParameterError
from .model import Batch, MLPShape, clip, local_train, loss_and_accuracy, loss_and_gradient

log = logging.getLogger(__name__)

# Substream identifiers (first element of the spawn key).
STREAM_DATA = 0
STREAM_INIT = 1
STREAM_TRAIN = 2
STREAM_CLIENT_NOISE = 3
STREAM_SERVER_NOISE = 4


def substream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key)))


@dataclass(frozen=True)
class TrainSettings:
    lr: float = 0.02
    epochs: int = 1
    batch_size: int | None = None
    mu: float = 0.01
    clip_bound: float | None = None  # None: no clipping (non-private runs)


@dataclass
class FederationState:
    global_params: np.ndarray
    round: int = 0
    seed: int = 0
    # Per-client (data, gradient at global_params) pairs from the last evaluation.
    local_grads: list | None = field(default=None, repr=False)

    def cached_grad(self, i: int, data: Batch):
        if self.local_grads is None:
            return None
        cached_data, g = self.local_grads[i]
        return g if cached_data is data else None


@dataclass
class RoundMetrics:
    round: int
    global_loss: float
    test_accuracy: float
    client_noise_norm: float
    server_noise_norm: float
    achieved_gammas: list[float]
    grad_norm_global: float
    test_loss: float = float("nan")

    @property
    def max_gamma(self) -> float:
        return max(self.achieved_gammas) if self.achieved_gammas else float("nan")


@dataclass
class RoundSnapshot:
    """Gradient information at the broadcast model, kept for bound estimation."""

    round: int
    params: np.ndarray
    global_grad: np.ndarray
    local_grad_norms: np.ndarray
    local_losses: np.ndarray
    divergences: np.ndarray  # ||grad l_i - grad L|| per client
    impacts: np.ndarray
    loss: float


@dataclass
class RoundResult:
    state: FederationState
    metrics: RoundMetrics
    snapshot: RoundSnapshot | None = None
    pre_noise_params: np.ndarray | None = field(default=None, repr=False)


def aggregate(client_params: Sequence[np.ndarray], impacts: Sequence[float]) -> np.ndarray:
    """Weighted sum ``sum_i p_i x_i``, reduced in client-index order."""
    if len(client_params) != len(impacts):
        raise InvalidParameterError(f"{len(client_params)} parameter vectors but {len(impacts)} impacts")
    p = validate_impacts(impacts)
    out = np.zeros_like(np.asarray(client_params[0], dtype=float))
    for w, x in zip(p, client_params):
        if w != 0.0:
            out += w * x
    return out


def _client_update(shape, start, data, settings, calibration, seed, rnd, client, anchor_grad=None):
    try:
        params, gamma = local_train(
            shape,
            start,
            data,
            anchor=start,
            mu=settings.mu,
            lr=settings.lr,
            epochs=settings.epochs,
            batch_size=settings.batch_size,
            seed=np.random.SeedSequence(seed, spawn_key=(STREAM_TRAIN, rnd, client)),
            anchor_grad=anchor_grad,
        )
    except DivergenceError as exc:
        raise DivergenceError("local training diverged", round=rnd, client=client, epoch=exc.epoch) from exc
    if settings.clip_bound is not None:
        params = clip(params, settings.clip_bound)
    noise = None
    if calibration.client_sigma > 0:
        noise = substream(seed, STREAM_CLIENT_NOISE, rnd, client).normal(0.0, calibration.client_sigma, params.size)
    return params, noise, gamma


def evaluate(shape, params, clients, impacts, test=None, with_snapshot=False, rnd=0):
    """Weighted training loss, global gradient and (optionally) test metrics."""
    losses = np.empty(len(clients))
    grads = []
    for i, data in enumerate(clients):
        losses[i], g = loss_and_gradient(shape, params, data)
        grads.append(g)
    p = np.asarray(impacts, dtype=float)
    global_loss = float(np.dot(p, losses))
    global_grad = aggregate(grads, p)
    test_acc = test_loss = float("nan")
    if test is not None:
        test_loss, test_acc = loss_and_accuracy(shape, params, test)
    snap = None
    if with_snapshot:
        snap = RoundSnapshot(
            round=rnd,
            params=params.copy(),
            global_grad=global_grad,
            local_grad_norms=np.array([np.linalg.norm(g) for g in grads]),
            local_losses=losses,
            divergences=np.array([np.linalg.norm(g - global_grad) for g in grads]),
            impacts=p.copy(),
            loss=global_loss,
        )
    return global_loss, global_grad, test_acc, test_loss, snap, grads


def run_round(
    state: FederationState,
    impacts: Sequence[float],
    calibration: NoiseCalibration,
    clients: Sequence[Batch],
    shape: MLPShape,
    settings: TrainSettings,
    test: Batch | None = None,
    workers: int = 1,
    keep_snapshot: bool = False,
) -> RoundResult:
    """Advance the federation by one aggregation.

    ``impacts`` are the weights of the aggregation that produces round
    ``state.round + 1``. Metrics are computed on the broadcast model, i.e.
    after server noise.
    """
    p = validate_impacts(impacts)
    if len(clients) != p.size:
        raise InvalidParameterError(f"{len(clients)} clients but {p.size} impacts")
    rnd = state.round + 1
    start = state.global_params

    def task(i):
        return _client_update(
            shape, start, clients[i], settings, calibration, state.seed, rnd, i, state.cached_grad(i, clients[i])
        )

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(task, range(len(clients))))
    else:
        results = [task(i) for i in range(len(clients))]

    uploads = [x if n is None else x + n for x, n, _ in results]
    gammas = [g for _, _, g in results]
    aggregated = aggregate(uploads, p)
    client_noise_norm = 0.0
    if calibration.client_sigma > 0:
        client_noise_norm = float(np.linalg.norm(aggregate([n for _, n, _ in results], p)))

    server_noise_norm = 0.0
    new_params = aggregated
    if calibration.server_sigma > 0:
        n_s = substream(state.seed, STREAM_SERVER_NOISE, rnd).normal(0.0, calibration.server_sigma, aggregated.size)
        server_noise_norm = float(np.linalg.norm(n_s))
        new_params = aggregated + n_s

    loss, grad, test_acc, test_loss, snap, grads = evaluate(shape, new_params, clients, p, test, keep_snapshot, rnd)
    if not np.isfinite(loss):
        raise DivergenceError("non-finite global loss", round=rnd)
    metrics = RoundMetrics(
        round=rnd,
        global_loss=loss,
        test_accuracy=test_acc,
        client_noise_norm=client_noise_norm,
        server_noise_norm=server_noise_norm,
        achieved_gammas=gammas,
        grad_norm_global=float(np.linalg.norm(grad)),
        test_loss=test_loss,
    )
    log.debug("round %d loss %.4f acc %.4f", rnd, loss, test_acc)
    new_state = FederationState(new_params, rnd, state.seed, list(zip(clients, grads)))
    return RoundResult(new_state, metrics, snap, pre_noise_params=aggregated)

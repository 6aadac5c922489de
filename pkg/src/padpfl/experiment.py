"""Build client datasets from a config and drive the round loop."""

from __future__ import annotations

import functools
import logging
from dataclasses import dataclass, field

import numpy as np

from . import data as D
from .accounting import NoiseCalibration, calibrate_schedule
from .config import ScenarioConfig
from .federation import (
    STREAM_DATA,
    STREAM_INIT,
    FederationState,
    RoundMetrics,
    RoundSnapshot,
    TrainSettings,
    evaluate,
    run_round,
    substream,
)
from .model import Batch, MLPShape

log = logging.getLogger(__name__)

# Second element of the DATA spawn key.
_DATA_PARTITION = 0
_DATA_CORRUPT = 1
_DATA_TEST = 2


@functools.lru_cache(maxsize=4)
def _mnist(split: str, directory: str | None) -> Batch:
    return D.load_mnist_split(split, directory)


@dataclass
class Trace:
    """Everything recorded during one run."""

    label: str
    metrics: list[RoundMetrics]
    snapshots: list[RoundSnapshot] = field(default_factory=list)
    calibration: NoiseCalibration | None = None


def client_datasets(cfg: ScenarioConfig, train: Batch) -> list[list[Batch]]:
    """Client data for each corruption segment (one list per segment).

    The split and the per-image corruption draws depend only on the seed, so
    every variant of a config sees the same data.
    """
    part = D.partition(
        train.labels, cfg.sizes, seed=substream(cfg.seed, STREAM_DATA, _DATA_PARTITION), label_skew=cfg.label_skew
    )
    owner = cfg.part_of_client()
    raw = [train.subset(ix) for ix in part.client_indices]
    out = []
    for k, seg in enumerate(cfg.corruption):
        clients = []
        for i, b in enumerate(raw):
            d = cfg.corruption_density(seg, int(owner[i]))
            imgs = D.salt_and_pepper(b.images, d, seed=substream(cfg.seed, STREAM_DATA, _DATA_CORRUPT, k, i))
            clients.append(Batch(imgs, b.labels))
        out.append(clients)
    return out


def _test_set(cfg: ScenarioConfig, test: Batch) -> Batch:
    if cfg.test_samples is None or cfg.test_samples >= len(test):
        return test
    rng = substream(cfg.seed, STREAM_DATA, _DATA_TEST)
    return test.subset(np.sort(rng.choice(len(test), cfg.test_samples, replace=False)))


def run_trace(cfg: ScenarioConfig, label: str | None = None, keep_snapshots: bool = False) -> Trace:
    """Run one concrete config (no variants) for ``cfg.rounds`` aggregations.

    With ``keep_snapshots`` the trace also holds gradient snapshots of the
    initial model and every broadcast model.
    """
    if cfg.variants:
        raise ValueError("run_trace takes a single variant; use run_variants")
    label = label or cfg.name
    trace = Trace(label, [])
    if cfg.rounds == 0:
        return trace
    data_dir = cfg.data_dir
    train = _mnist("train", data_dir)
    test = _test_set(cfg, _mnist("test", data_dir))
    segments = client_datasets(cfg, train)
    seg_starts = [c.start_round for c in cfg.corruption]

    schedule = cfg.schedule()
    shape = MLPShape(hidden=cfg.hidden_size)
    if cfg.private:
        calibration = calibrate_schedule(cfg.privacy_params(), schedule.factors)
        clip_bound = cfg.privacy.clip_bound
    else:
        calibration, clip_bound = NoiseCalibration.zero(), None
    trace.calibration = calibration
    settings = TrainSettings(cfg.learning_rate, cfg.local_epochs, cfg.batch_size, cfg.mu, clip_bound)

    state = FederationState(shape.init(substream(cfg.seed, STREAM_INIT)), 0, cfg.seed)
    if keep_snapshots:
        *_, snap, _ = evaluate(shape, state.global_params, segments[0], schedule.row(0), None, True, 0)
        trace.snapshots.append(snap)
    for t in range(cfg.rounds):
        # Row t of the schedule and the data of the segment covering row t.
        seg = int(np.searchsorted(seg_starts, t, side="right")) - 1
        res = run_round(
            state, schedule.row(t), calibration, segments[seg], shape, settings, test, cfg.workers, keep_snapshots
        )
        state = res.state
        trace.metrics.append(res.metrics)
        if res.snapshot is not None:
            trace.snapshots.append(res.snapshot)
    log.info("%s: final loss %.4f", label, trace.metrics[-1].global_loss)
    return trace


def run_experiment(cfg: ScenarioConfig) -> list[RoundMetrics]:
    return run_trace(cfg).metrics


def run_variants(cfg: ScenarioConfig, keep_snapshots: bool = False) -> list[Trace]:
    return [run_trace(sub, label, keep_snapshots) for label, sub in cfg.variant_configs()]

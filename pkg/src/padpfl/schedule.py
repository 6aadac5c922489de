"""Per-round, per-client impact factors (aggregation weights)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .accounting import IMPACT_SUM_TOL, validate_impacts
from .errors import InvalidParameterError


@dataclass(frozen=True)
class ImpactSchedule:
    """Dense ``(num_rounds, num_clients)`` matrix of impact factors.

    Row ``t`` holds the weights used by the aggregation that ends round
    ``t + 1`` (rounds are reported 1-based, rows are 0-based).
    """

    factors: np.ndarray

    def __post_init__(self):
        f = np.array(self.factors, dtype=float)
        if f.ndim != 2 or f.shape[0] < 1 or f.shape[1] < 1:
            raise InvalidParameterError(f"factors must be a non-empty 2-D matrix, got shape {f.shape}")
        for t, row in enumerate(f):
            try:
                validate_impacts(row)
            except InvalidParameterError as exc:
                raise InvalidParameterError(f"round {t}: {exc}") from None
        f.setflags(write=False)
        object.__setattr__(self, "factors", f)

    @property
    def num_rounds(self) -> int:
        return self.factors.shape[0]

    @property
    def num_clients(self) -> int:
        return self.factors.shape[1]

    def row(self, t: int) -> np.ndarray:
        return self.factors[t]

    @property
    def is_fixed(self) -> bool:
        return bool(np.all(self.factors == self.factors[0]))

    def max_impact(self) -> float:
        return float(self.factors.max())


def fixed_schedule(impacts: Sequence[float], num_rounds: int) -> ImpactSchedule:
    if num_rounds < 1:
        raise InvalidParameterError(f"num_rounds must be >= 1, got {num_rounds}")
    p = validate_impacts(impacts)
    return ImpactSchedule(np.tile(p, (num_rounds, 1)))


def piecewise_schedule(segments: Sequence[tuple[int, Sequence[float]]], num_rounds: int) -> ImpactSchedule:
    """Build a schedule from ``(start_row, impacts)`` segments.

    Segments must start at row 0 and have strictly increasing starts below
    ``num_rounds``; each segment runs until the next one begins.
    """
    if not segments:
        raise InvalidParameterError("at least one segment is required")
    starts = [int(s) for s, _ in segments]
    if starts[0] != 0:
        raise InvalidParameterError(f"first segment must start at round 0, got {starts[0]}")
    for a, b in zip(starts, starts[1:]):
        if b <= a:
            raise InvalidParameterError(f"segment starts must be strictly increasing, got {a} then {b}")
    if starts[-1] >= num_rounds:
        raise InvalidParameterError(f"segment start {starts[-1]} is beyond the last round {num_rounds - 1}")
    rows = []
    width = None
    for k, (start, impacts) in enumerate(segments):
        try:
            p = validate_impacts(impacts)
        except InvalidParameterError as exc:
            raise InvalidParameterError(f"segment {k}: {exc}") from None
        if width is not None and p.size != width:
            raise InvalidParameterError(f"segment {k} has {p.size} clients, expected {width}")
        width = p.size
        end = starts[k + 1] if k + 1 < len(starts) else num_rounds
        rows.append(np.tile(p, (end - start, 1)))
    return ImpactSchedule(np.vstack(rows))


def deltas(schedule: ImpactSchedule, round: int) -> np.ndarray:
    """Change of every client's impact between row ``round`` and ``round + 1``."""
    if not 0 <= round < schedule.num_rounds - 1:
        raise InvalidParameterError(f"round must lie in [0, {schedule.num_rounds - 2}], got {round}")
    alpha = schedule.factors[round + 1] - schedule.factors[round]
    # Row validation already bounds these; kept as a cheap guard on the invariant.
    if abs(alpha.sum()) > 2 * IMPACT_SUM_TOL or np.any(np.abs(alpha) > 1):
        raise InvalidParameterError(f"deltas at round {round} violate the zero-sum constraint")
    return alpha


def part_impacts(counts: Sequence[int], per_client: Sequence[float]) -> np.ndarray:
    """Expand one impact value per part into one value per client."""
    if len(counts) != len(per_client):
        raise InvalidParameterError("counts and per_client must have equal length")
    return np.repeat(np.asarray(per_client, dtype=float), np.asarray(counts, dtype=int))


def ratio_impacts(counts: Sequence[int], ratios: Sequence[float]) -> np.ndarray:
    """Per-part impacts proportional to ``ratios``, e.g. "0-1-2" over 20/20/20 clients.

    A ratio ``r_k`` for part ``k`` becomes ``r_k / sum_j(r_j * counts_j)`` per
    client, which is how the "0-1-2" style labels map to factors.
    """
    r = np.asarray(ratios, dtype=float)
    n = np.asarray(counts, dtype=int)
    if r.shape != n.shape:
        raise InvalidParameterError("counts and ratios must have equal length")
    if np.any(r < 0):
        raise InvalidParameterError("ratios must be nonnegative")
    total = float(np.dot(r, n))
    if total <= 0:
        raise InvalidParameterError("ratios give every client zero weight")
    return part_impacts(counts, r / total)

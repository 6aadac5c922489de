"""Gaussian-mechanism calibration for client-side and server-side noise.

All quantities are per-coordinate standard deviations. The client noise is
shared by every client (it is driven by the smallest local dataset), and the
server tops the aggregated client noise up to the total level required for
``T`` broadcasts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidParameterError

IMPACT_SUM_TOL = 1e-9


@dataclass(frozen=True)
class PrivacyParams:
    epsilon: float
    delta: float
    clip_bound: float
    revelations: int
    rounds: int
    dataset_sizes: tuple[int, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "dataset_sizes", tuple(int(m) for m in self.dataset_sizes))
        if not self.epsilon > 0:
            raise InvalidParameterError(f"epsilon must be positive, got {self.epsilon}")
        if not 0 < self.delta < 1:
            raise InvalidParameterError(f"delta must lie in (0, 1), got {self.delta}")
        if not self.clip_bound > 0:
            raise InvalidParameterError(f"clip_bound must be positive, got {self.clip_bound}")
        if self.revelations < 1:
            raise InvalidParameterError(f"revelations must be >= 1, got {self.revelations}")
        if self.rounds < 1:
            raise InvalidParameterError(f"rounds must be >= 1, got {self.rounds}")
        if self.revelations > self.rounds:
            raise InvalidParameterError(
                f"revelations ({self.revelations}) cannot exceed rounds ({self.rounds})"
            )
        for i, m in enumerate(self.dataset_sizes):
            if m < 1:
                raise InvalidParameterError(f"dataset_sizes[{i}] must be >= 1, got {m}")

    @property
    def min_size(self) -> int:
        if not self.dataset_sizes:
            raise InvalidParameterError("dataset_sizes is empty")
        return min(self.dataset_sizes)

    @property
    def max_size(self) -> int:
        if not self.dataset_sizes:
            raise InvalidParameterError("dataset_sizes is empty")
        return max(self.dataset_sizes)


@dataclass(frozen=True)
class NoiseCalibration:
    gauss_const: float
    client_sigma: float
    server_sigma: float
    agg_client_variance: float
    total_sigma: float

    @classmethod
    def zero(cls) -> "NoiseCalibration":
        """Calibration for the non-private mode: no clipping noise at all."""
        return cls(0.0, 0.0, 0.0, 0.0, 0.0)


def validate_impacts(impacts: Sequence[float]) -> np.ndarray:
    p = np.asarray(impacts, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise InvalidParameterError("impacts must be a non-empty 1-D sequence")
    bad = np.flatnonzero(~np.isfinite(p) | (p < 0) | (p > 1))
    if bad.size:
        i = int(bad[0])
        raise InvalidParameterError(f"impact[{i}] = {p[i]} is outside [0, 1]")
    if not np.any(p > 0):
        raise InvalidParameterError("impacts are all zero")
    total = math.fsum(p)
    if abs(total - 1.0) > IMPACT_SUM_TOL:
        raise InvalidParameterError(f"impacts sum to {total!r}, expected 1 within {IMPACT_SUM_TOL}")
    return p


def gauss_constant(delta: float) -> float:
    """Smallest admissible Gaussian-mechanism constant ``sqrt(2 ln(1.25/delta))``."""
    if not 0 < delta < 1:
        raise InvalidParameterError(f"delta must lie in (0, 1), got {delta}")
    return math.sqrt(2.0 * math.log(1.25 / delta))


def client_sensitivity(clip_bound: float, m_i: int) -> float:
    if m_i < 1:
        raise InvalidParameterError(f"m_i must be >= 1, got {m_i}")
    return 2.0 * clip_bound / m_i


def client_noise_sigma(params: PrivacyParams) -> float:
    c = gauss_constant(params.delta)
    return 2.0 * params.clip_bound * params.revelations * c / (params.min_size * params.epsilon)


def server_noise_sigma(params: PrivacyParams, impacts: Sequence[float]) -> float:
    """Server-side SD; zero when the aggregated client noise already suffices."""
    p = validate_impacts(impacts)
    pmax = float(p.max())
    sum_sq = float(np.dot(p, p))
    T, R = params.rounds, params.revelations
    if not T > R * math.sqrt(sum_sq) / pmax:
        return 0.0
    c = gauss_constant(params.delta)
    radicand = max(T * T * pmax * pmax - R * R * sum_sq, 0.0)
    return 2.0 * params.clip_bound * c * math.sqrt(radicand) / (params.min_size * params.epsilon)


def total_noise_sigma(params: PrivacyParams, impacts: Sequence[float]) -> float:
    """Total per-broadcast SD the server must guarantee, ``2 B T c max(p) / (min(m) eps)``."""
    p = validate_impacts(impacts)
    c = gauss_constant(params.delta)
    return 2.0 * params.clip_bound * params.rounds * c * float(p.max()) / (params.min_size * params.epsilon)


def aggregated_client_variance(client_sigma: float, impacts: Sequence[float]) -> float:
    p = validate_impacts(impacts)
    return float(client_sigma) ** 2 * float(np.dot(p, p))


def calibrate(params: PrivacyParams, impacts: Sequence[float]) -> NoiseCalibration:
    sigma_c = client_noise_sigma(params)
    return NoiseCalibration(
        gauss_const=gauss_constant(params.delta),
        client_sigma=sigma_c,
        server_sigma=server_noise_sigma(params, impacts),
        agg_client_variance=aggregated_client_variance(sigma_c, impacts),
        total_sigma=total_noise_sigma(params, impacts),
    )


def calibrate_schedule(params: PrivacyParams, factors: np.ndarray) -> NoiseCalibration:
    """One static calibration covering every row of a (rounds x clients) schedule.

    The total level uses the largest impact anywhere in the schedule; the
    server noise is sized against the row with the smallest sum of squared
    impacts (weakest aggregated client noise), so every round receives at
    least the total level.
    """
    factors = np.atleast_2d(np.asarray(factors, dtype=float))
    for t, row in enumerate(factors):
        try:
            validate_impacts(row)
        except InvalidParameterError as exc:
            raise InvalidParameterError(f"round {t}: {exc}") from None
    pmax = float(factors.max())
    s2 = float((factors ** 2).sum(axis=1).min())
    c = gauss_constant(params.delta)
    sigma_c = client_noise_sigma(params)
    scale = 2.0 * params.clip_bound * c / (params.min_size * params.epsilon)
    T, R = params.rounds, params.revelations
    if T > R * math.sqrt(s2) / pmax:
        sigma_s = scale * math.sqrt(max(T * T * pmax * pmax - R * R * s2, 0.0))
    else:
        sigma_s = 0.0
    return NoiseCalibration(
        gauss_const=c,
        client_sigma=sigma_c,
        server_sigma=sigma_s,
        agg_client_variance=sigma_c ** 2 * s2,
        total_sigma=scale * T * pmax,
    )

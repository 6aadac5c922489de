"""Analytical convergence quantities for fixed and adaptive impact factors.

The upper bound on ``E[L(x~_T) - L(x*)]`` has the shape

    Theta + k2 T + k1 T^2 / eps + k0 T^3 / eps^2

with ``k2 = lambda2 beta^2`` (plus ``max l_i / 2`` for adaptive impacts),
``k1 = 2 lambda1 beta B c max(p) / m * sqrt(2N/pi)`` and
``k0 = 4 lambda0 B^2 c^2 max(p)^2 / m^2``, where ``m`` is the largest local
dataset. ``size_convention="min"`` swaps in the smallest dataset instead,
which is the convention used for noise calibration.

Note that ``k0`` carries no factor ``N`` even though the expected squared
noise norm it derives from does; it is evaluated exactly as stated.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .accounting import PrivacyParams, gauss_constant
from .errors import InvalidParameterError, SingularityError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AnalysisConstants:
    rho: float
    mu: float
    mu_bar: float
    gamma: float
    dissimilarity: float
    grad_bound: float
    theta: float = 0.0
    divergence: float = 0.0
    max_local_loss: float = 0.0
    # Used by adaptive mode when set; falls back to ``dissimilarity``.
    dissimilarity_adaptive: float | None = None

    def __post_init__(self):
        if not self.mu > 0:
            raise InvalidParameterError(f"mu must be positive, got {self.mu}")
        if not self.mu_bar > 0:
            raise InvalidParameterError(f"mu_bar must be positive, got {self.mu_bar}")
        if not 0.0 <= self.gamma <= 1.0:
            raise InvalidParameterError(f"gamma must lie in [0, 1], got {self.gamma}")
        if not self.dissimilarity >= 1.0:
            raise InvalidParameterError(f"dissimilarity must be >= 1, got {self.dissimilarity}")
        if self.rho < 0 or self.grad_bound < 0 or self.theta < 0 or self.max_local_loss < 0:
            raise InvalidParameterError("rho, grad_bound, theta and max_local_loss must be nonnegative")

    def effective_dissimilarity(self, adaptive: bool) -> float:
        if adaptive and self.dissimilarity_adaptive is not None:
            return self.dissimilarity_adaptive
        return self.dissimilarity


def dissimilarity_pointwise(divergence: float, grad_norm: float) -> float:
    """``sqrt(1 + divergence^2 / ||grad L||^2)``."""
    if grad_norm == 0:
        raise SingularityError("dissimilarity is undefined where the global gradient vanishes")
    return math.sqrt(1.0 + (divergence / grad_norm) ** 2)


def adaptive_dissimilarity(
    base_A: float, alphas: Sequence[float], local_grad_norms: Sequence[float], global_grad_norm: float
) -> float:
    if len(alphas) != len(local_grad_norms):
        raise InvalidParameterError(f"{len(alphas)} deltas but {len(local_grad_norms)} gradient norms")
    if global_grad_norm == 0:
        raise SingularityError("adaptive dissimilarity is undefined where the global gradient vanishes")
    correction = math.fsum(a * g for a, g in zip(alphas, local_grad_norms))
    return correction / global_grad_norm + base_A


def lambda_coefficients(consts: AnalysisConstants, adaptive: bool = False) -> tuple[float, float, float]:
    """Per-iteration increment coefficients ``(lambda2, lambda1, lambda0)``."""
    A = consts.effective_dissimilarity(adaptive)
    rho, mu, mub, g = consts.rho, consts.mu, consts.mu_bar, consts.gamma
    lam2 = -1.0 / mu + (A / mu) * (g + rho * (1 + g) / mub) + rho * A * A * (1 + g) ** 2 / (2 * mub * mub)
    lam1 = 1.0 + rho * A * (1 + g) / mub
    lam0 = rho / 2.0
    return lam2, lam1, lam0


def expected_noise_norms(sensitivity: float, T: float, c: float, epsilon: float, num_clients: float) -> tuple[float, float]:
    """``(E||n||, E||n||^2)`` for the total noise, with ``N`` clients."""
    if min(sensitivity, T, c, epsilon, num_clients) <= 0:
        raise InvalidParameterError("all arguments must be positive")
    scale = sensitivity * T * c / epsilon
    return scale * math.sqrt(2 * num_clients / math.pi), scale * scale * num_clients


def _impact_summary(impacts) -> tuple[float, int]:
    p = np.asarray(impacts, dtype=float)
    if p.ndim not in (1, 2) or p.size == 0:
        raise InvalidParameterError("impacts must be a vector or a (rounds x clients) matrix")
    return float(p.max()), p.shape[-1]


def bound_coefficients(
    consts: AnalysisConstants,
    privacy: PrivacyParams,
    impacts,
    adaptive: bool = False,
    size_convention: str = "max",
) -> tuple[float, float, float]:
    """``(k2, k1, k0)``; ``impacts`` may be one row or a whole schedule."""
    if size_convention not in ("max", "min"):
        raise InvalidParameterError(f"size_convention must be 'max' or 'min', got {size_convention!r}")
    m = privacy.max_size if size_convention == "max" else privacy.min_size
    pmax, n_clients = _impact_summary(impacts)
    lam2, lam1, lam0 = lambda_coefficients(consts, adaptive)
    beta, B = consts.grad_bound, privacy.clip_bound
    c = gauss_constant(privacy.delta)
    k2 = lam2 * beta * beta
    if adaptive:
        k2 += consts.max_local_loss / 2.0
    k1 = 2 * lam1 * beta * B * c * pmax / m * math.sqrt(2 * n_clients / math.pi)
    k0 = 4 * lam0 * B * B * c * c * pmax * pmax / (m * m)
    return k2, k1, k0


def convergence_bound(
    consts: AnalysisConstants,
    privacy: PrivacyParams,
    impacts,
    adaptive: bool = False,
    rounds: int | None = None,
    size_convention: str = "max",
) -> float:
    """Upper bound after ``rounds`` aggregations (default ``privacy.rounds``)."""
    T = privacy.rounds if rounds is None else rounds
    if T < 0:
        raise InvalidParameterError(f"rounds must be nonnegative, got {T}")
    k2, k1, k0 = bound_coefficients(consts, privacy, impacts, adaptive, size_convention)
    eps = privacy.epsilon
    if k2 < 0:
        log.info("k2 = %.4g < 0: the deterministic term decreases the bound", k2)
    return consts.theta + k2 * T + k1 * T ** 2 / eps + k0 * T ** 3 / eps ** 2


def estimate_constants(metrics, snapshots, mu: float, rho_minus: float = 0.0) -> AnalysisConstants:
    """Empirical constants from a recorded run.

    ``metrics`` are the per-round records (``global_loss``,
    ``achieved_gammas``); ``snapshots`` carry the broadcast parameters and
    gradients (at least two, e.g. the initial model plus one round).
    """
    metrics = list(metrics)
    snapshots = list(snapshots)
    if not metrics:
        raise InvalidParameterError("trace is empty")
    if len(snapshots) < 2:
        raise InvalidParameterError(f"need at least two gradient snapshots, got {len(snapshots)}")

    rho = 0.0
    for a, b in itertools.combinations(snapshots, 2):
        dist = float(np.linalg.norm(a.params - b.params))
        if dist > 0:
            rho = max(rho, float(np.linalg.norm(a.global_grad - b.global_grad)) / dist)

    grad_norms = np.array([np.linalg.norm(s.global_grad) for s in snapshots])
    beta = float(max(grad_norms.max(), max(m.grad_norm_global for m in metrics)))
    gamma = max(max(m.achieved_gammas) for m in metrics if m.achieved_gammas)
    if gamma > 1:
        raise InvalidParameterError(f"measured inexactness {gamma:.4g} exceeds 1; the bound does not apply")
    divergence = float(max(np.max(s.divergences) for s in snapshots))
    A = dissimilarity_pointwise(divergence, float(grad_norms.min()))

    A_adaptive = A
    for s, nxt in zip(snapshots, snapshots[1:]):
        alphas = nxt.impacts - s.impacts
        if np.any(alphas != 0):
            gn = float(np.linalg.norm(s.global_grad))
            A_adaptive = max(A_adaptive, adaptive_dissimilarity(A, alphas, s.local_grad_norms, gn))

    losses = [m.global_loss for m in metrics]
    return AnalysisConstants(
        rho=rho,
        mu=mu,
        mu_bar=mu - rho_minus,
        gamma=float(gamma),
        dissimilarity=A,
        grad_bound=beta,
        theta=losses[0] - min(losses),
        divergence=divergence,
        max_local_loss=float(max(np.max(s.local_losses) for s in snapshots)),
        dissimilarity_adaptive=A_adaptive,
    )


def bound_curve(consts, privacy, impacts, num_rounds: int, adaptive=False, size_convention="max") -> list[float]:
    """Bound evaluated at ``T = 1 .. num_rounds``."""
    return [
        convergence_bound(consts, privacy, impacts, adaptive, rounds=t, size_convention=size_convention)
        for t in range(1, num_rounds + 1)
    ]

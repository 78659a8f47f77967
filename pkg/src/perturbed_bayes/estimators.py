"""Point estimates of the main and auxiliary particle systems.

The main system is summarized by its weighted mean. The auxiliary system
uses a reweighted mean restricted to a neighbourhood of the previous
estimate when enough reweighted mass sits there, and its mode otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .particles import ParticleSystem, softmax

MEAN = "mean"
MODE = "mode"


@dataclass(frozen=True)
class GtWeights:
    Delta: float = 0.95
    zeta1: float = 1.0
    zeta2: float = 0.5
    zeta3: float = 1.0
    zeta4: float = 0.5
    kappa: float = 0.9

    def __post_init__(self):
        if not 0.0 < self.Delta < 1.0:
            raise ConfigurationError("Delta must lie in (0, 1)")
        if not (0.0 < self.zeta2 < 1.0 and 0.0 < self.zeta4 < 1.0):
            raise ConfigurationError("zeta2 and zeta4 must lie in (0, 1)")
        if self.zeta1 <= 0.0 or self.zeta3 <= 0.0:
            raise ConfigurationError("zeta1 and zeta3 must be positive")


@dataclass
class AuxEstimateInputs:
    """Auxiliary system at a perturbation time.

    ``eps`` and ``mu`` are the radius and centre the support was generated
    with; ``log_weights`` are unnormalized; the first ``N`` points are the
    grid, the remaining ``M`` the exploratory ones.
    """

    eps: float
    mu: np.ndarray
    log_weights: np.ndarray
    points: np.ndarray
    N: int
    M: int

    def __post_init__(self):
        self.mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        self.log_weights = np.asarray(self.log_weights, dtype=float).reshape(-1)
        if len(self.points) != self.N + self.M or len(self.log_weights) != self.N + self.M:
            raise ConfigurationError("auxiliary system must hold exactly N + M points")
        if self.N < 1 or self.M < 1:
            raise ConfigurationError("need N >= 1 and M >= 1")


@dataclass(frozen=True)
class GtildeResult:
    estimate: np.ndarray
    branch: str
    Z: float
    mode: np.ndarray


def in_ball(points, center, radius) -> np.ndarray:
    # column by column: same mask as max|points - center| <= radius, without (n, d) temporaries
    points = np.atleast_2d(points)
    center = np.broadcast_to(np.asarray(center, dtype=float), points.shape[1:])
    mask = np.ones(len(points), dtype=bool)
    for j in range(points.shape[1]):
        mask &= np.abs(points[:, j] - center[j]) <= radius
    return mask


def weighted_mean(log_w, points) -> np.ndarray:
    return softmax(log_w) @ points


def estimate_G(sys: ParticleSystem) -> np.ndarray:
    return sys.posterior_mean()


def estimate_Gtilde_mode(inputs: AuxEstimateInputs) -> np.ndarray:
    # argmax keeps the lowest index among ties
    return inputs.points[int(np.argmax(inputs.log_weights))].copy()


def _a_weights(N: int, M: int, gw: GtWeights) -> np.ndarray:
    a = np.full(N + M, 1.0 - gw.zeta2)
    a[:N] = gw.zeta1 * M / N
    a[N] = gw.zeta2 * M
    return a


def compute_Zt(inputs: AuxEstimateInputs, gw: GtWeights) -> float:
    """Reweighted mass of the auxiliary system inside B_{(1+kappa) eps}(mu)."""
    w = softmax(np.log(_a_weights(inputs.N, inputs.M, gw)) + inputs.log_weights)
    inside = in_ball(inputs.points, inputs.mu, (1.0 + gw.kappa) * inputs.eps)
    return float(w[inside].sum())


def mean_branch(inputs: AuxEstimateInputs, gw: GtWeights) -> np.ndarray:
    """Reweighted mean over the grid and the exploratory points near mu."""
    N, M = inputs.N, inputs.M
    extra = np.arange(N, N + M)
    J = extra[in_ball(inputs.points[extra], inputs.mu, (1.0 + 2.0 * gw.kappa) * inputs.eps)]
    a_hat = np.empty(N + len(J))
    a_hat[:N] = gw.zeta3 * max(1, len(J)) / N
    a_hat[N:] = np.where(J == N, gw.zeta4 * len(J), 1.0 - gw.zeta4)
    if np.array_equal(J, np.arange(N, N + len(J))):
        sel = slice(0, N + len(J))  # a view, no copy of the grid
    else:
        sel = np.concatenate([np.arange(N), J])
    return weighted_mean(np.log(a_hat) + inputs.log_weights[sel], inputs.points[sel])


def estimate_Gtilde_full(inputs: AuxEstimateInputs, gw: GtWeights) -> GtildeResult:
    Z = compute_Zt(inputs, gw)
    mode = estimate_Gtilde_mode(inputs)
    if Z > gw.Delta:
        return GtildeResult(mean_branch(inputs, gw), MEAN, Z, mode)
    return GtildeResult(mode, MODE, Z, mode)


def estimate_Gtilde(inputs: AuxEstimateInputs, gw: GtWeights) -> np.ndarray:
    return estimate_Gtilde_full(inputs, gw).estimate

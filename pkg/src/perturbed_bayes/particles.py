"""Weighted particle systems and their Bayes weight updates.

Weights are kept as unnormalized log-weights; normalization happens only
when a query (mean, mode, mass) needs it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ModelEvaluationError
from .tiling import TileRunner


def softmax(log_w: np.ndarray) -> np.ndarray:
    """Max-shifted exponentiation, normalized to sum to one."""
    w = np.exp(log_w - np.max(log_w))
    return w / w.sum()


@dataclass
class ParticleSystem:
    """Finite-support distribution: ``points`` (P, d) and unnormalized log-weights (P,)."""

    points: np.ndarray
    log_weights: np.ndarray
    block_start_t: int = 0

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        self.log_weights = np.asarray(self.log_weights, dtype=float).reshape(-1)
        if len(self.points) == 0:
            raise ValueError("a particle system needs at least one point")
        if len(self.points) != len(self.log_weights):
            raise ValueError("points and log_weights must have the same length")

    @classmethod
    def uniform(cls, points, t: int = 0) -> "ParticleSystem":
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return cls(points, np.zeros(len(points)), t)

    @property
    def size(self) -> int:
        return len(self.points)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def normalized_weights(self) -> np.ndarray:
        return softmax(self.log_weights)

    def posterior_mean(self) -> np.ndarray:
        return self.normalized_weights() @ self.points

    def mode_index(self) -> int:
        # np.argmax returns the first maximizer, i.e. ties go to the lowest index.
        return int(np.argmax(self.log_weights))

    def mass_in_ball(self, center, radius: float) -> float:
        inside = np.max(np.abs(self.points - np.asarray(center, dtype=float)), axis=1) <= radius
        return float(self.normalized_weights()[inside].sum())

    def copy(self) -> "ParticleSystem":
        return ParticleSystem(self.points.copy(), self.log_weights.copy(), self.block_start_t)

    def to_record(self) -> dict:
        return {"points": self.points.tolist(), "log_weights": self.log_weights.tolist(),
                "block_start_t": int(self.block_start_t)}

    @classmethod
    def from_record(cls, rec: dict) -> "ParticleSystem":
        return cls(np.asarray(rec["points"], dtype=float),
                   np.asarray(rec["log_weights"], dtype=float), int(rec["block_start_t"]))


def loglik_increments(points: np.ndarray, obs, model, runner: TileRunner | None = None) -> np.ndarray:
    """Summed log-density of an observation batch at every point, shape (P,)."""
    out = np.empty(len(points))
    if runner is None:
        out[:] = model.block_loglik(points, obs)
    else:
        runner.map_rows(lambda rows: model.block_loglik(rows, obs), points, out)
    return out


def bayes_update(sys: ParticleSystem, obs, model, runner: TileRunner | None = None) -> ParticleSystem:
    """Add the log-density of ``obs`` (one observation or a batch) to every log-weight.

    The system is updated in place and returned. If any increment is not
    finite the weights are left untouched and ModelEvaluationError is raised.
    """
    inc = loglik_increments(sys.points, obs, model, runner)
    if not np.all(np.isfinite(inc)):
        bad = int(np.flatnonzero(~np.isfinite(inc))[0])
        raise ModelEvaluationError(
            f"non-finite log-density at particle {bad} (value {inc[bad]!r}); observation rejected")
    sys.log_weights += inc
    return sys


def reset_weights(sys: ParticleSystem, t: int) -> ParticleSystem:
    sys.log_weights = np.zeros(sys.size)
    sys.block_start_t = int(t)
    return sys


def concentration_check(points, model, obs) -> tuple[int, np.ndarray]:
    """Index of the point carrying the most posterior mass after absorbing ``obs``.

    Starting from uniform weights on a fixed support; also returns the masses.
    """
    sys = ParticleSystem.uniform(points)
    bayes_update(sys, obs, model)
    w = sys.normalized_weights()
    return int(np.argmax(w)), w

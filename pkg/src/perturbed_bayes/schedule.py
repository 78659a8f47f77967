"""Perturbation schedule and the scalar sequences driving support radii.

All quantities are deterministic functions of the configuration, computed
incrementally in O(1) per perturbation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterator

from .errors import ConfigurationError

OWN = "own"
AUX = "aux"


@dataclass(frozen=True)
class ScheduleConfig:
    kappa: float = 0.9
    t1: int = 10
    eps0: float = 1.0
    varrho: float = 2.1
    beta: float = 0.01
    varepsilon: float = 0.1
    d: int = 1

    def __post_init__(self):
        if not 0.0 < self.kappa < 1.0:
            raise ConfigurationError(f"kappa must lie in (0, 1), got {self.kappa}")
        if self.varrho <= 2.0:
            raise ConfigurationError(f"varrho must exceed 2, got {self.varrho}")
        if min(self.eps0, self.beta, self.varepsilon) <= 0.0:
            raise ConfigurationError("eps0, beta and varepsilon must be positive")
        if self.t1 < 1 or self.d < 1:
            raise ConfigurationError("t1 and d must be positive integers")


@dataclass(frozen=True)
class ScheduleState:
    """Bookkeeping for the perturbation that has just been applied.

    ``p`` is the index of the next perturbation to run; ``t_cur`` its time
    t_p (the perturbation fires before observation t_p + 1 is absorbed).
    """

    p: int = 1
    t_prev: int = 0
    t_cur: int = 0
    q: int = 0
    xi: float = 1.0
    eps_p: float = 1.0
    c_prev: float = 1.0
    c_cur: float = 1.0

    @classmethod
    def initial(cls, cfg: ScheduleConfig) -> "ScheduleState":
        # q_0 = 0 and xi_0 = 1 independently of eps0.
        return cls(p=1, t_prev=0, t_cur=next_perturbation_time(0, cfg),
                   q=0, xi=1.0, eps_p=cfg.eps0, c_prev=1.0, c_cur=1.0)


def next_perturbation_time(t_prev: int, cfg: ScheduleConfig) -> int:
    """Return t_p given t_{p-1}; the increment is floored at ``t1``."""
    if t_prev < 0:
        raise ValueError("t_prev must be non-negative")
    growth = math.ceil((cfg.kappa ** -2 - 1.0) * t_prev)
    return int(t_prev + max(growth, cfg.t1))


def perturbation_times(cfg: ScheduleConfig, t_max: int | None = None) -> Iterator[int]:
    """Yield t_1, t_2, ... (stopping after ``t_max`` when given)."""
    t = 0
    while True:
        t = next_perturbation_time(t, cfg)
        if t_max is not None and t > t_max:
            return
        yield t


def epsilon_p(p: int, cfg: ScheduleConfig) -> float:
    """Guidance radius; ``p = 0`` returns ``eps0`` itself."""
    if p == 0:
        return cfg.eps0
    if p < 0:
        raise ValueError("p must be non-negative")
    ratio = cfg.varrho * math.log(p + 1.0) / p
    return cfg.eps0 * min(1.0, ratio ** (1.0 / (cfg.d + cfg.beta)))


def c_p(p: int, cfg: ScheduleConfig) -> float:
    if p < 0:
        raise ValueError("p must be non-negative")
    if p == 0:
        return 1.0
    geometric = ((1.0 + cfg.kappa) / (2.0 * cfg.kappa)) ** p
    return min(geometric, p ** ((1.0 + cfg.varepsilon) / 2.0))


def apply_interaction(state: ScheduleState, dist: float,
                      cfg: ScheduleConfig) -> tuple[ScheduleState, str]:
    """Run the interaction test for perturbation ``state.p``.

    Returns the updated state (with ``q``, ``xi``, ``eps_p`` and the c values
    for this perturbation) and the branch flag, ``OWN`` when the main
    estimate is kept and ``AUX`` when the auxiliary estimate takes over.
    The schedule times are left to :func:`advance`.
    """
    eps = epsilon_p(state.p, cfg)
    if dist <= 2.0 * eps:
        q = state.q + 1
        c_old, c_new = c_p(state.q, cfg), c_p(q, cfg)
        xi = cfg.kappa * (c_new / c_old) * state.xi
        branch = OWN
    else:
        q = 1
        c_old, c_new = c_p(state.q, cfg), c_p(1, cfg)
        xi = eps
        branch = AUX
    return replace(state, q=q, xi=xi, eps_p=eps, c_prev=c_old, c_cur=c_new), branch


def advance(state: ScheduleState, cfg: ScheduleConfig) -> ScheduleState:
    """Move to the next perturbation index and its scheduled time."""
    return replace(state, p=state.p + 1, t_prev=state.t_cur,
                   t_cur=next_perturbation_time(state.t_cur, cfg))

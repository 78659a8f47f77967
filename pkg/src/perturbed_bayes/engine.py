"""Online estimator: two particle systems, Bayes updates and scheduled perturbations.

Between perturbation times only log-weights change. At each scheduled time
the main and auxiliary systems are summarized, the interaction test picks
the new centre and radius, both supports are regenerated and weights are
reset. Randomness for perturbation ``p`` comes from sub-streams keyed by
``(seed, p, role)`` so results do not depend on the number of threads or
on how the stream is chunked.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .config import AlgoConfig
from .errors import ConfigurationError, InvariantViolation, ModelEvaluationError
from .estimators import AuxEstimateInputs, GtildeResult, estimate_Gtilde_full
from .meanfield import (Partition, PartitionLearner, aux_pool_sampler, estimate_G_mf,
                        estimate_Gtilde_mf, gen_support_F_mf, gen_support_Ftilde_mf,
                        partition_for_blocks, r_of_n)
from .models import Model, Observations, as_observations
from .particles import ParticleSystem, loglik_increments, reset_weights
from .schedule import AUX, ScheduleState, advance, apply_interaction
from .support import AuxParams, ExplorationPool, gen_support_F, gen_support_Ftilde
from .tiling import TileRunner

ROLE_INIT, ROLE_MAIN, ROLE_AUX, ROLE_POOL = 0, 1, 2, 3


def substream(seed: int, p: int, role: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(p), int(role)]))


def max_norm(v) -> float:
    return float(np.max(np.abs(v)))


@dataclass
class TraceRow:
    t: int
    p: int
    kind: str
    xi: float
    eps: float
    q: int
    branch: str
    gtilde: str
    Z: float
    estimate: np.ndarray
    error: float
    ess: float
    tau: int
    T: float
    sigma_norm: float
    cut: float
    partition: str
    wall_ns_per_obs: float


@dataclass
class RunReport:
    rows: list
    estimate: np.ndarray
    t: int
    wall_ns_per_obs: float
    stopped_early: bool = False
    extra: dict = field(default_factory=dict)


class PerturbedBayes:
    """Streaming estimator.

    Parameters
    ----------
    model : Model
        Per-observation log-likelihood.
    config : AlgoConfig
        Tunables; see :class:`AlgoConfig`.
    truth : array-like, optional
        Known parameter, used only to fill the error column of the trace.
    """

    def __init__(self, model: Model, config: AlgoConfig, truth=None):
        self.model = model
        self.cfg = config
        d = self.d = model.dim
        self.truth = None if truth is None else np.asarray(truth, dtype=float).reshape(d)
        self.sched_cfg = config.schedule(d)
        self.gw = config.gt_weights()
        self.runner = TileRunner(config.workers)

        self.meanfield = self._resolve_mode()
        N = config.N
        if self.meanfield:
            if config.partition is not None:
                fixed = partition_for_blocks(N, config.partition)
                R = fixed.R
            else:
                fixed = None
                R = r_of_n(N, d)
        else:
            if N < 2**d:
                raise ConfigurationError(
                    f"N={N} < 2^d={2**d}; use mode='meanfield' or 'auto'")
            fixed, R = None, 1
        self.R = R
        self.M_total = (R + 1) * config.M if R > 1 else config.M
        learn = config.learn_partition and config.N_aux >= 2 and fixed is None
        self.learner = PartitionLearner(N=N, d=d, N_aux=max(config.N_aux, 2),
                                        fixed=None if learn else (fixed or self._default_partition()))
        self.learner.Sigma = config.sigma_scale * np.eye(d)
        self.partition: Partition = self.learner.partition  # partition of the live supports

        # initial draws, centre of the auxiliary system is their mean
        rng = substream(config.seed, 0, ROLE_INIT)
        mu0 = np.asarray(config.mu0_for(d))
        sd = math.sqrt(config.init_var)
        self.main = ParticleSystem.uniform(mu0 + sd * rng.standard_normal((N, d)))
        self.aux = ParticleSystem.uniform(mu0 + sd * rng.standard_normal((N + self.M_total, d)))
        self.aux_center = self.aux.points.mean(axis=0)
        self.aux_radius = config.eps0
        self.main_center = self.aux_center.copy()
        self.main_radius = 1.0
        self.structured = False
        self.theta_hat = self.main.posterior_mean()
        self.sched = ScheduleState.initial(self.sched_cfg)
        self.t = 0
        self.rows: list[TraceRow] = []
        self._last_row_t = 0
        self._last_row_wall = time.perf_counter()
        self._last_gtilde: GtildeResult | None = None
        self.listener = None  # called with every new TraceRow

        self.pool_points = None
        if config.N_aux >= 2:
            self._sample_pool(0, self.aux_center, 1.0)
            self.learner.next_tau(self.sched.t_cur - 0)

    # ------------------------------------------------------------ set-up

    def _resolve_mode(self) -> bool:
        if self.cfg.mode == "full":
            return False
        if self.cfg.mode == "meanfield":
            return True
        return self.cfg.N < 2**self.model.dim

    def _default_partition(self) -> Partition:
        from .meanfield import default_partition
        if self.meanfield:
            return default_partition(self.cfg.N, self.d)
        from .support import k_of_n
        return Partition((tuple(range(self.d)),), (k_of_n(self.cfg.N, self.d),))

    def _sample_pool(self, p: int, center, xi: float):
        rng = substream(self.cfg.seed, p, ROLE_POOL)
        pts, roles = aux_pool_sampler(center, xi, self.learner.Sigma, self.cfg.N_aux, rng)
        self.pool_points = pts
        self.pool_is_mf = roles
        self.pool_full = np.zeros(len(pts))
        self.pool_short = np.zeros(int(roles.sum()))
        self.pool_start = self.t

    # ------------------------------------------------------- estimates

    @property
    def estimate(self) -> np.ndarray:
        """Current point estimate: the weighted mean of the main system."""
        return self.main.posterior_mean()

    def estimate_distance(self, theta_bar, vartheta_bar) -> float:
        """Max-norm distance, minimized over likelihood-preserving relabelings."""
        cands = self.model.relabelings(vartheta_bar)
        return float(np.min(np.max(np.abs(cands - np.asarray(theta_bar)), axis=1)))

    def error_of(self, est) -> float:
        if self.truth is None:
            return float("nan")
        return self.estimate_distance(est, self.truth)

    # ------------------------------------------------------ perturbation

    def _G(self) -> np.ndarray:
        if not self.structured or self.partition.R == 1:
            return self.main.posterior_mean()
        return estimate_G_mf(self.main.points, self.main.log_weights, self.partition,
                             self.main_center, self.main_radius)

    def _Gtilde(self) -> GtildeResult:
        N = self.cfg.N
        inputs = AuxEstimateInputs(self.aux_radius, self.aux_center, self.aux.log_weights,
                                   self.aux.points, N, self.aux.size - N)
        if not self.structured or self.partition.R == 1:
            return estimate_Gtilde_full(inputs, self.gw)
        return estimate_Gtilde_mf(inputs, self.partition, self.gw, self.cfg.M)

    def _exploration_pool(self) -> ExplorationPool:
        """Candidates for the best-likelihood auxiliary slot, scored over the last block."""
        pts = [self.main.points, self.aux.points]
        scores = [self.main.log_weights, self.aux.log_weights]
        if self.pool_points is not None:
            pts.insert(0, self.pool_points)
            scores.insert(0, self.pool_full)
        # only the best M - 1 candidates can enter the auxiliary support
        return ExplorationPool.top(pts, scores, self.cfg.M - 1)

    def perturb(self):
        """Run the perturbation block for the scheduled time t_p (== self.t)."""
        cfg, N, p = self.cfg, self.cfg.N, self.sched.p
        theta_hat_t = self.main.posterior_mean()
        theta_bar = self._G()
        gt = self._Gtilde()
        vartheta_bar = gt.estimate
        dist = self.estimate_distance(theta_bar, vartheta_bar)
        self.sched, branch = apply_interaction(self.sched, dist, self.sched_cfg)
        xi, eps = self.sched.xi, self.sched.eps_p
        centre = theta_bar if branch != AUX else vartheta_bar

        cut = float("nan")
        if self.pool_points is not None:
            self.learner.update(self.pool_points[self.pool_is_mf], self.pool_short)
            cut = self.learner.cut
        explore = self._exploration_pool()
        new_partition = self.learner.partition

        aux_params = AuxParams(Sigma=self.learner.Sigma, M=cfg.M, nu=cfg.nu, L=cfg.L)
        # the old systems are no longer needed; dropping them keeps the peak at one support each
        self.main = self.aux = None
        rng_main = substream(cfg.seed, p, ROLE_MAIN)
        rng_aux = substream(cfg.seed, p, ROLE_AUX)
        if self.meanfield:
            aux_pts = gen_support_Ftilde_mf(vartheta_bar, eps, N, new_partition, aux_params,
                                            explore, rng_aux)
        else:
            aux_pts = gen_support_Ftilde(vartheta_bar, eps, N, aux_params, explore, rng_aux)
        if cfg.share_support and branch == AUX:
            main_pts = aux_pts[:N].copy()
        elif self.meanfield:
            main_pts = gen_support_F_mf(centre, xi, N, new_partition, rng_main)
        else:
            main_pts = gen_support_F(centre, xi, N, rng_main)

        self.main = reset_weights(ParticleSystem.uniform(main_pts), self.t)
        self.aux = reset_weights(ParticleSystem.uniform(aux_pts), self.t)
        self.main_center, self.main_radius = np.asarray(centre, dtype=float), xi
        self.aux_center, self.aux_radius = np.asarray(vartheta_bar, dtype=float), eps
        self.partition = new_partition
        self.structured = True
        self.theta_hat = np.asarray(centre, dtype=float)
        self._last_gtilde = gt

        next_t = advance(self.sched, self.sched_cfg).t_cur
        if self.pool_points is not None:
            self._sample_pool(p, gt.mode, xi)
            self.learner.next_tau(next_t - self.t)

        self._emit(kind="perturb", branch=branch, gt=gt, est=theta_hat_t, cut=cut)
        self.sched = advance(self.sched, self.sched_cfg)

    def _emit(self, kind, branch="", gt=None, est=None, cut=float("nan")):
        now = time.perf_counter()
        n = self.t - self._last_row_t
        wall = (now - self._last_row_wall) * 1e9 / n if n > 0 else float("nan")
        self._last_row_t, self._last_row_wall = self.t, now
        est = self.estimate if est is None else est
        L = self.learner
        has_pool = self.pool_points is not None
        self.rows.append(TraceRow(
            t=self.t, p=self.sched.p if kind == "perturb" else self.sched.p - 1, kind=kind,
            xi=self.sched.xi, eps=self.sched.eps_p, q=self.sched.q, branch=branch,
            gtilde="" if gt is None else gt.branch, Z=float("nan") if gt is None else gt.Z,
            estimate=np.array(est, dtype=float), error=self.error_of(est),
            ess=L.ess if has_pool else float("nan"), tau=L.tau if has_pool else 0,
            T=L.T if has_pool else float("nan"),
            sigma_norm=float(np.linalg.norm(L.Sigma, 2)), cut=cut,
            partition=self.partition.digest(), wall_ns_per_obs=wall))
        if self.listener is not None:
            self.listener(self.rows[-1])

    # ----------------------------------------------------- Bayes updates

    def _absorb(self, obs: Observations):
        """Bayes-update both systems and the pool with a batch inside one block."""
        self.model.check_obs(obs)
        inc_main = loglik_increments(self.main.points, obs, self.model, self.runner)
        inc_aux = loglik_increments(self.aux.points, obs, self.model, self.runner)
        inc_pool = None
        if self.pool_points is not None:
            inc_pool = loglik_increments(self.pool_points, obs, self.model, self.runner)
        for name, inc in (("main", inc_main), ("aux", inc_aux), ("pool", inc_pool)):
            if inc is not None and not np.all(np.isfinite(inc)):
                bad = int(np.flatnonzero(~np.isfinite(inc))[0])
                raise ModelEvaluationError(
                    f"non-finite log-density for {name} particle {bad} at t={self.t + 1}; "
                    "observation batch rejected")
        self.main.log_weights += inc_main
        self.aux.log_weights += inc_aux
        if inc_pool is not None:
            self.pool_full += inc_pool
            if self.t - self.pool_start < self.learner.tau:
                self.pool_short += inc_pool[self.pool_is_mf]
        self.t += len(obs)

    def _room(self) -> int:
        """Observations that can be absorbed before the next boundary."""
        room = min(self.cfg.chunk, self.sched.t_cur - self.t)
        if self.pool_points is not None:
            in_window = self.learner.tau - (self.t - self.pool_start)
            if in_window > 0:
                room = min(room, in_window)
        return room

    def step(self, y):
        """Absorb one observation, perturbing first when it is due."""
        if self.t == self.sched.t_cur:
            self.perturb()
        self._absorb(as_observations(y))

    def run(self, stream, horizon: int, checkpoints=()) -> RunReport:
        """Consume observations until ``self.t == horizon`` or the stream ends.

        Resumable: calling again with a larger horizon continues the run.
        ``checkpoints`` are times at which an extra trace row is recorded.
        """
        start_t, start_wall = self.t, time.perf_counter()
        marks = sorted(int(c) for c in checkpoints if int(c) > self.t)
        stopped = False
        while self.t < horizon:
            if self.t == self.sched.t_cur:
                self.perturb()
            n = min(self._room(), horizon - self.t)
            if marks:
                n = min(n, marks[0] - self.t)
            obs = stream.read(n)
            if obs is None or len(obs) == 0:
                stopped = True
                break
            self._absorb(obs)
            while marks and self.t >= marks[0]:
                marks.pop(0)
                self._emit(kind="sample")
        elapsed = time.perf_counter() - start_wall
        done = self.t - start_t
        return RunReport(rows=self.rows, estimate=self.estimate, t=self.t,
                         wall_ns_per_obs=elapsed * 1e9 / done if done else float("nan"),
                         stopped_early=stopped)

    def check_support_invariants(self, tol: float = 1e-12):
        """Main support within xi of its centre, auxiliary grid within eps of its centre."""
        if not self.structured:
            return
        N = self.cfg.N
        if max_norm(self.main.points - self.main_center) > self.main_radius * (1 + tol):
            raise InvariantViolation("main support leaves its ball")
        if max_norm(self.aux.points[:N] - self.aux_center) > self.aux_radius * (1 + tol):
            raise InvariantViolation("auxiliary grid leaves its ball")

    def close(self):
        self.runner.close()

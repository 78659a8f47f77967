"""Likelihood families behind a common per-observation log-density interface.

Every model exposes

* ``loglik_matrix(points, obs)``: the (P, B) matrix of log f_theta(y_b),
  written with plain numpy broadcasting;
* ``block_loglik(points, obs)``: the (P,) row sums, computed by a fused
  kernel that never materializes the matrix.

The two paths are independent implementations and are cross-checked in the
test suite.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numba
import numpy as np
from scipy.special import expit, log_expit, logsumexp

from .errors import ConfigurationError

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class Observations:
    """A batch of observations: responses ``z`` and optional covariates ``x``.

    ``z`` has shape (B,) for scalar responses or (B, k) for vector ones;
    ``x`` has shape (B, d_x) when present.
    """

    z: np.ndarray
    x: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "z", np.ascontiguousarray(self.z, dtype=float))
        if self.x is not None:
            x = np.ascontiguousarray(self.x, dtype=float)
            if x.ndim == 1:
                x = x.reshape(len(self.z), -1)
            if len(x) != len(self.z):
                raise ConfigurationError("z and x must have the same number of rows")
            object.__setattr__(self, "x", x)

    def __len__(self) -> int:
        return len(self.z)

    def __getitem__(self, sl: slice) -> "Observations":
        return Observations(self.z[sl], None if self.x is None else self.x[sl])

    @classmethod
    def single(cls, z, x=None) -> "Observations":
        z = np.asarray(z, dtype=float)
        return cls(z[None, ...], None if x is None else np.asarray(x, dtype=float)[None, :])


def as_observations(y) -> Observations:
    """Coerce a scalar, a ``(z, x)`` pair or an Observations batch."""
    if isinstance(y, Observations):
        return y
    if isinstance(y, tuple) and len(y) == 2:
        return Observations.single(*y)
    return Observations.single(y)


class Model:
    """Base class. Subclasses set ``dim`` and implement ``loglik_matrix``."""

    dim: int = 1
    x_dim: int = 0

    def loglik_matrix(self, points: np.ndarray, obs: Observations) -> np.ndarray:
        raise NotImplementedError

    def block_loglik(self, points: np.ndarray, obs: Observations) -> np.ndarray:
        return self.loglik_matrix(points, obs).sum(axis=1)

    def logf(self, theta, y) -> float:
        theta = np.asarray(theta, dtype=float).reshape(1, self.dim)
        return float(self.loglik_matrix(theta, as_observations(y))[0, 0])

    def relabelings(self, theta) -> np.ndarray:
        """Parameter vectors with the same likelihood as ``theta``; identity only by default."""
        return np.asarray(theta, dtype=float).reshape(1, self.dim)

    def check_obs(self, obs: Observations):
        if self.x_dim:
            if obs.x is None or obs.x.shape[1] != self.x_dim:
                got = None if obs.x is None else obs.x.shape[1]
                raise ConfigurationError(f"model expects {self.x_dim} covariates, got {got}")


class GaussianLocation(Model):
    """y ~ N_d(theta, sigma^2 I)."""

    def __init__(self, dim: int = 1, sigma: float = 1.0):
        self.dim = int(dim)
        self.sigma = float(sigma)

    def loglik_matrix(self, points, obs):
        points = np.asarray(points, dtype=float).reshape(-1, self.dim)
        z = obs.z.reshape(len(obs), self.dim)
        sq = np.zeros((len(points), len(z)))
        for i in range(self.dim):
            sq += (z[None, :, i] - points[:, i, None]) ** 2
        return -0.5 * sq / self.sigma**2 - 0.5 * self.dim * (LOG_2PI + 2 * math.log(self.sigma))


# ---------------------------------------------------------------- 1-d mixture


@numba.njit(cache=True, nogil=True)
def _gmm_block(theta, y, offsets, log_alpha, inv_var, log_norm):
    out = np.empty(theta.shape[0])
    nj = offsets.shape[0]
    terms = np.empty(nj)
    for p in range(theta.shape[0]):
        acc = 0.0
        for b in range(y.shape[0]):
            u = y[b] - theta[p]
            m = -np.inf
            for j in range(nj):
                v = u - offsets[j]
                terms[j] = log_alpha[j] - 0.5 * v * v * inv_var
                if terms[j] > m:
                    m = terms[j]
            s = 0.0
            for j in range(nj):
                s += math.exp(terms[j] - m)
            acc += m + math.log(s)
        out[p] = acc + y.shape[0] * log_norm
    return out


class MixtureDemo(Model):
    """One-dimensional location family: a J-component Gaussian mixture with
    components at theta + o_j, o_j = j - (J+1)/2, variance ``var0``, and
    weights proportional to a N(0, var1) density at o_j."""

    dim = 1

    def __init__(self, J: int = 21, var0: float = 0.01, var1: float = 0.64):
        self.J, self.var0, self.var1 = int(J), float(var0), float(var1)
        self.offsets = np.arange(self.J) - (self.J - 1) / 2.0
        log_a = -0.5 * self.offsets**2 / self.var1
        self.log_alpha = log_a - logsumexp(log_a)
        self.alpha = np.exp(self.log_alpha)

    def loglik_matrix(self, points, obs):
        theta = np.asarray(points, dtype=float).reshape(-1)
        u = obs.z.reshape(-1)[None, :, None] - theta[:, None, None] - self.offsets
        terms = self.log_alpha - 0.5 * u**2 / self.var0
        return logsumexp(terms, axis=2) - 0.5 * (LOG_2PI + math.log(self.var0))

    def block_loglik(self, points, obs):
        theta = np.ascontiguousarray(np.asarray(points, dtype=float).reshape(-1))
        return _gmm_block(theta, obs.z.reshape(-1), self.offsets, self.log_alpha,
                          1.0 / self.var0, -0.5 * (LOG_2PI + math.log(self.var0)))

    def sample(self, rng: np.random.Generator, n: int, theta: float = 0.0) -> np.ndarray:
        comp = rng.choice(self.J, size=n, p=self.alpha)
        return theta + self.offsets[comp] + math.sqrt(self.var0) * rng.standard_normal(n)


# ---------------------------------------------------------- quantile models


def check_loss(u, q):
    """Quantile check loss, ``0.5|u| + (q - 1/2) u``."""
    return 0.5 * np.abs(u) + (q - 0.5) * u


def mean_nl1(theta, x):
    """Logistic-type mean with four parameters and three covariates.

    ``theta`` (..., 4) and ``x`` (..., 3) broadcast against each other.
    """
    theta = np.asarray(theta, dtype=float)
    x = np.asarray(x, dtype=float)
    t1, t2, t3, t4 = (theta[..., i] for i in range(4))
    t3 = np.where(np.abs(t3) < 1e-12, np.where(t3 < 0, -1e-12, 1e-12), t3)
    with np.errstate(over="ignore"):
        return t4 + (t1 - t4 + x[..., 0]) / (1.0 + np.exp((t2 + x[..., 1] - x[..., 2]) / t3))


def mean_nl2(theta, x):
    """Sum of exponential decays plus a reversed-index linear term."""
    theta = np.asarray(theta, dtype=float)
    x = np.asarray(x, dtype=float)
    return np.sum(np.exp(-x * theta**2) + x * theta[..., ::-1], axis=-1)


def mean_linear(theta, x):
    return np.sum(np.asarray(theta, dtype=float) * np.asarray(x, dtype=float), axis=-1)


@numba.njit(cache=True, nogil=True)
def _nl1_block(points, z, x, q):
    out = np.empty(points.shape[0])
    for p in range(points.shape[0]):
        t1, t2, t3, t4 = points[p, 0], points[p, 1], points[p, 2], points[p, 3]
        if abs(t3) < 1e-12:
            t3 = -1e-12 if t3 < 0 else 1e-12
        inv3 = 1.0 / t3
        acc = 0.0
        for b in range(z.shape[0]):
            e = (t2 + x[b, 1] - x[b, 2]) * inv3
            mu = t4 + (t1 - t4 + x[b, 0]) / (1.0 + math.exp(e))
            u = z[b] - mu
            acc += 0.5 * abs(u) + (q - 0.5) * u
        out[p] = -acc
    return out


@numba.njit(cache=True, nogil=True)
def _nl2_block(points, z, x, q):
    out = np.empty(points.shape[0])
    d = points.shape[1]
    for p in range(points.shape[0]):
        acc = 0.0
        for b in range(z.shape[0]):
            mu = 0.0
            for i in range(d):
                th = points[p, i]
                mu += math.exp(-x[b, i] * th * th) + x[b, i] * points[p, d - 1 - i]
            u = z[b] - mu
            acc += 0.5 * abs(u) + (q - 0.5) * u
        out[p] = -acc
    return out


@numba.njit(cache=True, nogil=True)
def _check_rowsum(mu, z, q):
    out = np.empty(mu.shape[0])
    for p in range(mu.shape[0]):
        acc = 0.0
        for b in range(z.shape[0]):
            u = z[b] - mu[p, b]
            acc += 0.5 * abs(u) + (q - 0.5) * u
        out[p] = -acc
    return out


class QuantileRegression(Model):
    """Asymmetric-Laplace working likelihood for the q-th conditional quantile.

    log f = log(q(1-q)) - rho_q(z - mean(theta, x)).

    Parameters
    ----------
    kind : {"nl1", "nl2", "linear"}
        Mean function.
    q : float
        Quantile level in (0, 1).
    dim : int
        Parameter dimension; fixed to 4 for ``nl1``. For ``nl2`` and
        ``linear`` the covariate dimension equals ``dim``.
    """

    MEANS = {"nl1": mean_nl1, "nl2": mean_nl2, "linear": mean_linear}

    def __init__(self, kind: str = "nl1", q: float = 0.5, dim: int | None = None):
        if kind not in self.MEANS:
            raise ConfigurationError(f"unknown quantile mean function {kind!r}")
        if not 0.0 < q < 1.0:
            raise ConfigurationError("q must lie in (0, 1)")
        self.kind, self.q = kind, float(q)
        if kind == "nl1":
            if dim not in (None, 4):
                raise ConfigurationError("nl1 has exactly four parameters")
            self.dim, self.x_dim = 4, 3
        else:
            if dim is None:
                raise ConfigurationError(f"{kind} needs an explicit dimension")
            self.dim = self.x_dim = int(dim)
        self.log_norm = math.log(self.q * (1.0 - self.q))

    def mean(self, theta, x):
        return self.MEANS[self.kind](theta, x)

    def loglik_matrix(self, points, obs):
        self.check_obs(obs)
        points = np.asarray(points, dtype=float).reshape(-1, self.dim)
        mu = self.mean(points[:, None, :], obs.x[None, :, :])
        return self.log_norm - check_loss(obs.z[None, :] - mu, self.q)

    def block_loglik(self, points, obs):
        self.check_obs(obs)
        points = np.ascontiguousarray(points, dtype=float).reshape(-1, self.dim)
        if self.kind == "nl1":
            s = _nl1_block(points, obs.z, obs.x, self.q)
        elif self.kind == "nl2":
            s = _nl2_block(points, obs.z, obs.x, self.q)
        else:
            s = _check_rowsum(points @ obs.x.T, obs.z, self.q)
        return s + len(obs) * self.log_norm


# ------------------------------------------------ mixture of logistic models


@numba.njit(cache=True, nogil=True)
def _log_sigmoid(v):
    if v >= 0:
        return -math.log1p(math.exp(-v))
    return v - math.log1p(math.exp(v))


@numba.njit(cache=True, nogil=True)
def _mixlogit_block(points, z, x, J):
    dx = x.shape[1]
    out = np.empty(points.shape[0])
    lw = np.empty(J)
    terms = np.empty(J)
    for p in range(points.shape[0]):
        m = 0.0
        for j in range(1, J):
            if points[p, j - 1] > m:
                m = points[p, j - 1]
        s = math.exp(-m)
        for j in range(1, J):
            s += math.exp(points[p, j - 1] - m)
        lse = m + math.log(s)
        lw[0] = -lse
        for j in range(1, J):
            lw[j] = points[p, j - 1] - lse
        acc = 0.0
        for b in range(z.shape[0]):
            sign = 1.0 if z[b] > 0.5 else -1.0
            tm = -np.inf
            for j in range(J):
                off = J - 1 + j * dx
                eta = 0.0
                for i in range(dx):
                    eta += points[p, off + i] * x[b, i]
                terms[j] = lw[j] + _log_sigmoid(sign * eta)
                if terms[j] > tm:
                    tm = terms[j]
            ss = 0.0
            for j in range(J):
                ss += math.exp(terms[j] - tm)
            acc += tm + math.log(ss)
        out[p] = acc
    return out


class MixtureLogistic(Model):
    """Mixture of J logistic regressions for a binary response.

    Parameter layout: J-1 mixing logits (the first component's logit is
    pinned at 0) followed by J regression vectors of length ``x_dim``, so
    ``dim = (x_dim + 1) * J - 1``.
    """

    def __init__(self, J: int = 2, x_dim: int = 3):
        if J < 1 or x_dim < 1:
            raise ConfigurationError("J and x_dim must be positive")
        self.J, self.x_dim = int(J), int(x_dim)
        self.dim = (self.x_dim + 1) * self.J - 1
        self._perms = np.array(list(itertools.permutations(range(self.J))), dtype=int)

    def split(self, theta):
        theta = np.asarray(theta, dtype=float)
        logits = np.concatenate([np.zeros(theta.shape[:-1] + (1,)), theta[..., : self.J - 1]], axis=-1)
        betas = theta[..., self.J - 1:].reshape(theta.shape[:-1] + (self.J, self.x_dim))
        return logits, betas

    def join(self, logits, betas):
        logits = np.asarray(logits, dtype=float)
        rel = logits[..., 1:] - logits[..., :1]
        return np.concatenate([rel, np.asarray(betas).reshape(betas.shape[:-2] + (-1,))], axis=-1)

    def loglik_matrix(self, points, obs):
        self.check_obs(obs)
        points = np.asarray(points, dtype=float).reshape(-1, self.dim)
        logits, betas = self.split(points)
        log_w = logits - logsumexp(logits, axis=1, keepdims=True)          # (P, J)
        eta = np.einsum("pji,bi->pbj", betas, obs.x)                        # (P, B, J)
        sign = np.where(obs.z > 0.5, 1.0, -1.0)[None, :, None]
        return logsumexp(log_w[:, None, :] + log_expit(sign * eta), axis=2)

    def block_loglik(self, points, obs):
        self.check_obs(obs)
        points = np.ascontiguousarray(points, dtype=float).reshape(-1, self.dim)
        return _mixlogit_block(points, obs.z, obs.x, self.J)

    def relabelings(self, theta) -> np.ndarray:
        """All J! parameter vectors obtained by permuting component labels."""
        logits, betas = self.split(np.asarray(theta, dtype=float).reshape(self.dim))
        out = np.empty((len(self._perms), self.dim))
        for k, perm in enumerate(self._perms):
            out[k] = self.join(logits[perm], betas[perm])
        return out

    def predict_proba(self, theta, x) -> np.ndarray:
        """P(z = 1 | x) for each row of ``x``."""
        logits, betas = self.split(np.asarray(theta, dtype=float).reshape(self.dim))
        w = np.exp(logits - logsumexp(logits))
        eta = np.atleast_2d(np.asarray(x, dtype=float)) @ betas.T
        return expit(eta) @ w

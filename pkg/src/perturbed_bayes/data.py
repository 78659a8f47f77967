"""Synthetic data generators and one-pass observation streams."""

from __future__ import annotations

import csv
import math
from typing import Callable, Iterator

import numpy as np

from .errors import ConfigurationError
from .models import MixtureDemo, MixtureLogistic, Observations, mean_linear, mean_nl1, mean_nl2

NL1_THETA = np.array([70.0, 10.0, 3.0, 10.0])
NL1_COV = np.array([[4.0, -2.0], [-2.0, 4.0]])


def gen_gaussian(rng: np.random.Generator, n: int, theta, sigma: float = 1.0) -> Observations:
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    return Observations(theta + sigma * rng.standard_normal((n, len(theta))))


def gen_gmm_demo(rng: np.random.Generator, n: int, theta: float = 0.0,
                 model: MixtureDemo | None = None) -> Observations:
    model = model or MixtureDemo()
    return Observations(model.sample(rng, n, theta))


def gen_nl1(rng: np.random.Generator, n: int, theta=NL1_THETA) -> Observations:
    x = np.empty((n, 3))
    x[:, :2] = rng.multivariate_normal(np.zeros(2), NL1_COV, size=n, method="cholesky")
    x[:, 2] = rng.uniform(0.0, 20.0, size=n)
    z = mean_nl1(np.asarray(theta, dtype=float), x) + rng.standard_normal(n)
    return Observations(z, x)


def gen_nl2(rng: np.random.Generator, n: int, d: int, theta=None) -> Observations:
    theta = np.ones(d) if theta is None else np.asarray(theta, dtype=float)
    x = np.empty((n, d))
    x[:, 0] = 1.0
    x[:, 1:] = rng.uniform(size=(n, d - 1))
    return Observations(mean_nl2(theta, x) + rng.standard_normal(n), x)


def linear_sigma_x(rng: np.random.Generator, rho: float = 0.0, sizes=(9, 10),
                   max_tries: int = 10_000) -> np.ndarray:
    """Covariance of the non-constant covariates of the linear model.

    Two diagonal blocks A^T A and B^T B (entries of A, B iid U(0, 1), square
    with the given sizes) coupled by a constant ``rho`` off-diagonal block,
    redrawn until positive definite and scaled to unit max-entry.
    """
    n1, n2 = sizes
    for _ in range(max_tries):
        A = rng.uniform(size=(n1, n1))
        B = rng.uniform(size=(n2, n2))
        S = np.full((n1 + n2, n1 + n2), float(rho))
        S[:n1, :n1] = A.T @ A
        S[n1:, n1:] = B.T @ B
        S /= np.max(np.abs(S))
        try:
            np.linalg.cholesky(S)
            return S
        except np.linalg.LinAlgError:
            continue
    raise ConfigurationError(f"no positive definite covariance after {max_tries} draws")


def linear_theta_star(rng: np.random.Generator, d: int = 20) -> np.ndarray:
    return rng.uniform(1.0, 5.0, size=d)


def gen_linear(rng: np.random.Generator, n: int, theta, Sigma_x) -> Observations:
    theta = np.asarray(theta, dtype=float)
    d = len(theta)
    x = np.empty((n, d))
    x[:, 0] = 1.0
    x[:, 1:] = rng.standard_normal((n, d - 1)) @ np.linalg.cholesky(Sigma_x).T
    return Observations(mean_linear(theta, x) + rng.standard_normal(n), x)


def mixture_theta_star(rng: np.random.Generator, x_dim: int, J: int = 2,
                       weight2: float = 0.7, intercept: float = -2.0) -> np.ndarray:
    """Seeded true parameter for the logistic-mixture experiments.

    The second mixing weight is ``weight2`` (logit log(w/(1-w)) for J = 2);
    regression slopes are U(-2, 2) and intercepts ``intercept`` + U(-1, 1).
    """
    model = MixtureLogistic(J, x_dim)
    logits = np.zeros(J)
    if J >= 2:
        logits[1] = math.log(weight2 / (1.0 - weight2))
    betas = rng.uniform(-2.0, 2.0, size=(J, x_dim))
    betas[:, 0] = intercept + rng.uniform(-1.0, 1.0, size=J)
    return model.join(logits, betas)


def gen_mixture(rng: np.random.Generator, n: int, theta, J: int, x_dim: int) -> Observations:
    model = MixtureLogistic(J, x_dim)
    x = np.empty((n, x_dim))
    x[:, 0] = 1.0
    x[:, 1:] = rng.standard_normal((n, x_dim - 1))
    p = model.predict_proba(theta, x)
    return Observations((rng.uniform(size=n) < p).astype(float), x)


# ------------------------------------------------------------------ streams


class ObservationStream:
    """One-pass source of observations.

    ``read(n)`` returns the next batch of at most ``n`` observations, or None
    once exhausted. Iteration yields single observations.
    """

    def read(self, n: int) -> Observations | None:
        raise NotImplementedError

    def __iter__(self) -> Iterator[Observations]:
        return self

    def __next__(self) -> Observations:
        obs = self.read(1)
        if obs is None:
            raise StopIteration
        return obs


class ArrayStream(ObservationStream):
    def __init__(self, obs: Observations):
        self._obs = obs
        self._pos = 0

    def read(self, n):
        if self._pos >= len(self._obs):
            return None
        out = self._obs[self._pos:self._pos + n]
        self._pos += len(out)
        return out


class GeneratorStream(ObservationStream):
    """Draws from ``fn(rng, n)`` in fixed-size blocks, so the observation
    sequence does not depend on how callers size their reads."""

    def __init__(self, fn: Callable[[np.random.Generator, int], Observations],
                 seed, total: int | None = None, block: int = 4096):
        self.fn = fn
        self.rng = np.random.default_rng(seed)
        self.total = total
        self.block = int(block)
        self._buf: Observations | None = None
        self._pos = 0
        self._served = 0

    def read(self, n):
        if self.total is not None:
            n = min(n, self.total - self._served)
            if n <= 0:
                return None
        parts = []
        while n > 0:
            if self._buf is None or self._pos >= len(self._buf):
                self._buf, self._pos = self.fn(self.rng, self.block), 0
            take = self._buf[self._pos:self._pos + n]
            self._pos += len(take)
            n -= len(take)
            parts.append(take)
        out = parts[0] if len(parts) == 1 else Observations(
            np.concatenate([p.z for p in parts]),
            None if parts[0].x is None else np.concatenate([p.x for p in parts]))
        self._served += len(out)
        return out


class CSVStream(ObservationStream):
    """Rows of a CSV file with a header: first column z, remaining columns x.

    With ``shuffle_seed`` the rows are loaded and permuted once up front;
    otherwise the file is read lazily.
    """

    def __init__(self, path, shuffle_seed: int | None = None, x_dim: int | None = None):
        self.path = path
        try:
            self._fh = open(path, newline="", encoding="utf-8")
        except OSError as exc:
            raise ConfigurationError(f"cannot read {path}: {exc}") from exc
        self._reader = csv.reader(self._fh)
        self.header = next(self._reader, None)
        if self.header is None or len(self.header) < 1:
            raise ConfigurationError(f"{path}: missing header row")
        self.x_dim = len(self.header) - 1
        if x_dim is not None and x_dim != self.x_dim:
            raise ConfigurationError(f"{path}: expected {x_dim} covariate columns, found {self.x_dim}")
        self._array = None
        if shuffle_seed is not None:
            rows = self._parse(list(self._reader), start_line=2)
            self._fh.close()
            perm = np.random.default_rng(shuffle_seed).permutation(len(rows))
            self._array = ArrayStream(self._to_obs(rows[perm]))
        self._line = 2

    def _parse(self, rows, start_line):
        width = self.x_dim + 1
        for k, r in enumerate(rows):
            if len(r) != width:
                raise ConfigurationError(
                    f"{self.path}:{start_line + k}: expected {width} columns, got {len(r)}")
        try:
            return np.array(rows, dtype=float).reshape(len(rows), width)
        except ValueError as exc:
            raise ConfigurationError(f"{self.path}: non-numeric value ({exc})") from exc

    def _to_obs(self, arr):
        return Observations(arr[:, 0], arr[:, 1:] if self.x_dim else None)

    def read(self, n):
        if self._array is not None:
            return self._array.read(n)
        rows = []
        for row in self._reader:
            if not row:
                continue
            rows.append(row)
            if len(rows) >= n:
                break
        if not rows:
            self._fh.close()
            return None
        arr = self._parse(rows, self._line)
        self._line += len(rows)
        return self._to_obs(arr)


def write_csv(path, obs: Observations, names=None):
    """Write observations in the CSV layout read by :class:`CSVStream`."""
    x_dim = 0 if obs.x is None else obs.x.shape[1]
    names = names or ["z"] + [f"x{i + 1}" for i in range(x_dim)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for k in range(len(obs)):
            row = [repr(float(obs.z[k]))]
            if x_dim:
                row += [repr(float(v)) for v in obs.x[k]]
            w.writerow(row)

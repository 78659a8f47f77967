"""Random support generation around a centre in max-norm balls.

A ball B_eps(mu) is cut into K cells per axis. Every cell centroid is
placed first; surplus points go uniformly into cells visited in a random
cyclic order, so no cell holds more than ceil(N / K^d) + 1 points.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError


def k_of_n(N: int, d: int) -> int:
    """Largest k with k**d <= N."""
    if N < 1 or d < 1:
        raise ValueError("N and d must be positive")
    k = max(1, int(round(N ** (1.0 / d))))
    while k**d > N:
        k -= 1
    while (k + 1) ** d <= N:
        k += 1
    return k


def occupancy_cap(N: int, n_cells: int) -> int:
    return -(-N // n_cells) + 1


@functools.lru_cache(maxsize=32)
def cell_index_grid(K: int, s: int) -> np.ndarray:
    """Row-major multi-indices of the K**s cells, shape (K**s, s); cached, read-only."""
    idx = np.indices((K,) * s).reshape(s, -1).T.copy() if s else np.zeros((1, 0), dtype=int)
    idx.flags.writeable = False
    return idx


def cell_centroids(mu_block, eps: float, K: int) -> np.ndarray:
    """Centroids of the K**s cells of B_eps(mu_block), row-major order."""
    mu_block = np.asarray(mu_block, dtype=float)
    odd = cell_index_grid(K, len(mu_block)) * 2
    odd += 1
    out = np.multiply(odd, eps / K)
    del odd
    out += mu_block - eps
    return out


def cell_of(points_block, mu_block, eps: float, K: int) -> np.ndarray:
    """Row-major cell index of points lying in B_eps(mu_block)."""
    rel = (np.asarray(points_block, dtype=float) - mu_block + eps) * (K / (2.0 * eps))
    j = np.clip(np.floor(rel).astype(int), 0, K - 1)
    return np.ravel_multi_index(tuple(j.T), (K,) * j.shape[1]) if j.shape[1] else np.zeros(len(j), int)


def _cyclic_order(n_items: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` items drawn by cycling through one random permutation of range(n_items)."""
    if count <= 0:
        return np.zeros(0, dtype=int)
    perm = rng.permutation(n_items)
    return np.resize(perm, count)


def grid_support(mu, eps: float, blocks, Ks, N: int, rng: np.random.Generator,
                 extra: int = 0) -> np.ndarray:
    """Shared generator behind the full-dimensional and blockwise supports.

    Each block ``blocks[r]`` (coordinate indices) gets the K_r**|S_r| centroids
    of its slice of B_eps(mu), with coordinates off the block frozen at mu.
    Surplus points are spread over blocks and then cells in cyclic random order.
    ``extra`` trailing rows are left at mu for the caller to fill, which saves
    a copy of the whole support.
    """
    mu = np.asarray(mu, dtype=float)
    sizes = [Ks[r] ** len(b) for r, b in enumerate(blocks)]
    n_base = sum(sizes)
    if n_base > N:
        raise ConfigurationError(f"{n_base} centroids do not fit into N={N} points")
    out = np.repeat(mu[None, :], N + extra, axis=0)
    row = 0
    for b, K in zip(blocks, Ks):
        b = np.asarray(b, dtype=int)
        idx = cell_index_grid(K, len(b))
        # same values as cell_centroids, filled one column at a time
        for j, col in enumerate(b):
            out[row:row + len(idx), col] = mu[col] - eps + (2 * idx[:, j] + 1) * (eps / K)
        row += len(idx)
    surplus = N - n_base
    if surplus:
        block_of = _cyclic_order(len(blocks), surplus, rng)
        for r, (b, K) in enumerate(zip(blocks, Ks)):
            rows = np.flatnonzero(block_of == r) + n_base
            if len(rows) == 0:
                continue
            b = np.asarray(b, dtype=int)
            cells = _cyclic_order(K ** len(b), len(rows), rng)
            idx = np.array(np.unravel_index(cells, (K,) * len(b))).T
            lower = mu[b] - eps + 2 * idx * (eps / K)
            pts = lower + rng.uniform(size=(len(rows), len(b))) * (2 * eps / K)
            # guard against rounding past the ball boundary
            pts = np.clip(pts, mu[b] - eps, mu[b] + eps)
            out[np.ix_(rows, b)] = pts
    return out


def gen_support_F(mu, eps: float, N: int, rng: np.random.Generator,
                  extra: int = 0) -> np.ndarray:
    """N points in B_eps(mu): all K_N**d cell centroids first, surplus uniform within cells."""
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    d = len(mu)
    if N < 2**d:
        raise ConfigurationError(
            f"N={N} < 2^d={2**d}: the full-dimensional support cannot cover every "
            "axis; use the mean-field mode instead")
    return grid_support(mu, eps, [np.arange(d)], [k_of_n(N, d)], N, rng, extra)


def clamp_g(theta, L: float = 500.0) -> np.ndarray:
    """Componentwise projection onto [-L, L]^d."""
    return np.clip(np.asarray(theta, dtype=float), -L, L)


def cholesky_or_raise(Sigma) -> np.ndarray:
    try:
        return np.linalg.cholesky(np.atleast_2d(np.asarray(Sigma, dtype=float)))
    except np.linalg.LinAlgError as exc:
        raise ConfigurationError("scale matrix is not symmetric positive definite") from exc


def draw_student_t(mu, Sigma, nu: float, L: float, rng: np.random.Generator,
                   size: int | None = None) -> np.ndarray:
    """Multivariate Student-t with location clamp_g(mu), scale Sigma and ``nu`` dof."""
    loc = clamp_g(np.atleast_1d(mu), L)
    chol = cholesky_or_raise(Sigma)
    n = 1 if size is None else size
    z = rng.standard_normal((n, len(loc))) @ chol.T
    w = np.sqrt(nu / rng.chisquare(nu, size=n))
    draws = loc + z * w[:, None]
    return draws[0] if size is None else draws


@dataclass
class AuxParams:
    """Tunables for the exploratory part of the auxiliary support."""

    Sigma: np.ndarray
    M: int = 2
    nu: float = 3.0
    L: float = 500.0
    N_aux: int = 0

    def __post_init__(self):
        self.Sigma = np.atleast_2d(np.asarray(self.Sigma, dtype=float))
        if self.nu <= 0 or self.L <= 0 or self.M < 1:
            raise ConfigurationError("need nu > 0, L > 0 and M >= 1")
        if not np.allclose(self.Sigma, self.Sigma.T):
            raise ConfigurationError("Sigma must be symmetric")


@dataclass
class ExplorationPool:
    """Candidate parameters scored by their log-likelihood over the last block."""

    points: np.ndarray = field(default_factory=lambda: np.zeros((0, 1)))
    scores: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def ranked(self) -> np.ndarray:
        order = np.argsort(-self.scores, kind="stable")
        return self.points[order]

    @classmethod
    def top(cls, points, scores, keep: int) -> "ExplorationPool":
        """Pool of the ``keep`` best candidates from several (points, scores) sources.

        Ranks exactly as a stable sort over the concatenated sources would,
        without materializing the concatenation.
        """
        pts, sc = [], []
        for P, S in zip(points, scores):
            if keep <= 0 or len(S) == 0:
                continue
            idx = np.argsort(-np.asarray(S), kind="stable")[:keep]
            pts.append(np.asarray(P)[idx])
            sc.append(np.asarray(S)[idx])
        if not pts:
            d = np.asarray(points[0]).shape[1] if len(points) else 1
            return cls(np.zeros((0, d)), np.zeros(0))
        return cls(np.vstack(pts), np.concatenate(sc))


def gen_support_Ftilde(mu, eps: float, N: int, aux: AuxParams,
                       pool: ExplorationPool | None, rng: np.random.Generator) -> np.ndarray:
    """N + M points: the grid of :func:`gen_support_F`, a Student-t draw at
    slot N+1, then the best-scored pool candidates (extra Student-t draws
    when the pool runs out)."""
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    out = gen_support_F(mu, eps, N, rng, extra=aux.M)
    out[N] = draw_student_t(mu, aux.Sigma, aux.nu, aux.L, rng)
    ranked = pool.ranked() if pool is not None and len(pool.scores) else np.zeros((0, len(mu)))
    for k in range(aux.M - 1):
        if k < len(ranked):
            out[N + 1 + k] = ranked[k]
        else:
            out[N + 1 + k] = draw_student_t(mu, aux.Sigma, aux.nu, aux.L, rng)
    return out

"""Blockwise (mean-field) supports and estimates, plus partition learning.

When N < 2^d the ball cannot be explored along every axis at once. The
coordinates are then split into R blocks and each block is explored inside
its own slice of the ball, the other coordinates being frozen at the
centre. The partition itself is learned from importance-weighted
correlations of a pool of candidate points.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, InvariantViolation
from .estimators import (MEAN, MODE, AuxEstimateInputs, GtildeResult, GtWeights,
                         estimate_Gtilde_full, softmax)
from .support import (AuxParams, ExplorationPool, draw_student_t, gen_support_Ftilde,
                      grid_support)

# ------------------------------------------------------------ partitions


def _ranges(block) -> str:
    """Compact 1-based rendering, e.g. (0, 1, 2, 5) -> '1-3,6'."""
    parts, start, prev = [], None, None
    for i in sorted(block):
        if start is None:
            start = prev = i
        elif i == prev + 1:
            prev = i
        else:
            parts.append(f"{start + 1}" if start == prev else f"{start + 1}-{prev + 1}")
            start = prev = i
    parts.append(f"{start + 1}" if start == prev else f"{start + 1}-{prev + 1}")
    return ",".join(parts)


@dataclass(frozen=True)
class Partition:
    """Ordered disjoint blocks of 0-based coordinate indices with per-block resolutions."""

    blocks: tuple
    resolutions: tuple

    def __post_init__(self):
        blocks = tuple(tuple(sorted(int(i) for i in b)) for b in self.blocks)
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "resolutions", tuple(int(k) for k in self.resolutions))
        if len(blocks) != len(self.resolutions) or not blocks:
            raise ConfigurationError("one resolution per non-empty block is required")
        flat = sorted(itertools.chain.from_iterable(blocks))
        if any(len(b) == 0 for b in blocks) or flat != list(range(len(flat))):
            raise ConfigurationError("blocks must be non-empty, disjoint and cover 0..d-1")

    @property
    def d(self) -> int:
        return sum(len(b) for b in self.blocks)

    @property
    def R(self) -> int:
        return len(self.blocks)

    @property
    def sizes(self) -> tuple:
        return tuple(len(b) for b in self.blocks)

    def cost(self) -> int:
        return sum(k ** len(b) for b, k in zip(self.blocks, self.resolutions))

    def labels(self) -> np.ndarray:
        lab = np.empty(self.d, dtype=int)
        for r, b in enumerate(self.blocks):
            lab[list(b)] = r
        return lab

    def digest(self) -> str:
        """Block list in 1-based range notation, e.g. '2-10|1,11-20'."""
        return "|".join(_ranges(b) for b in self.blocks)

    def same_blocks(self, other: "Partition") -> bool:
        return set(self.blocks) == set(other.blocks)

    @classmethod
    def from_labels(cls, labels, resolutions) -> "Partition":
        labels = np.asarray(labels)
        R = int(labels.max()) + 1
        return cls(tuple(tuple(np.flatnonzero(labels == r)) for r in range(R)), resolutions)


def balanced_sizes(d: int, R: int) -> tuple:
    q, rem = divmod(d, R)
    return tuple([q + 1] * rem + [q] * (R - rem))


def r_of_n(N: int, d: int) -> int:
    """Smallest number of blocks R for which every block slice gets 2 cells per axis."""
    if N < 2 * d:
        raise ConfigurationError(f"N={N} < 2d={2 * d}: too few points for any partition")
    for R in range(1, d + 1):
        if sum(2**s for s in balanced_sizes(d, R)) <= N:
            return R
    raise InvariantViolation("unreachable: R = d always fits when N >= 2d")


def common_resolution(N: int, sizes) -> int:
    """Largest K with sum_r K^{s_r} <= N."""
    K = 1
    while sum((K + 1) ** s for s in sizes) <= N:
        K += 1
    return K


def resolutions_for_sizes(N: int, sizes) -> tuple:
    """Per-block resolutions: the common K, then greedy single increments.

    At each step the block whose increment costs most while still fitting
    is raised (lowest index on ties), until no single increment fits.
    """
    K = common_resolution(N, sizes)
    Ks = [K] * len(sizes)
    total = sum(K**s for s in sizes)
    while True:
        best, best_gain = None, -1
        for r, s in enumerate(sizes):
            gain = (Ks[r] + 1) ** s - Ks[r] ** s
            if total + gain <= N and gain > best_gain:
                best, best_gain = r, gain
        if best is None:
            return tuple(Ks)
        Ks[best] += 1
        total += best_gain


def block_sizes_and_resolutions(N: int, d: int, R: int | None = None):
    """Return (sizes, K, per-block resolutions) for the balanced split."""
    R = r_of_n(N, d) if R is None else R
    sizes = balanced_sizes(d, R)
    return sizes, common_resolution(N, sizes), resolutions_for_sizes(N, sizes)


def default_partition(N: int, d: int) -> Partition:
    sizes, _, Ks = block_sizes_and_resolutions(N, d)
    blocks, start = [], 0
    for s in sizes:
        blocks.append(tuple(range(start, start + s)))
        start += s
    return Partition(tuple(blocks), Ks)


def partition_for_blocks(N: int, blocks) -> Partition:
    sizes = [len(b) for b in blocks]
    return Partition(tuple(tuple(b) for b in blocks), resolutions_for_sizes(N, sizes))


# -------------------------------------------------- blockwise supports


def gen_support_F_mf(mu, eps: float, N: int, partition: Partition,
                     rng: np.random.Generator) -> np.ndarray:
    """N points, each differing from ``mu`` only on the coordinates of one block."""
    return grid_support(np.asarray(mu, dtype=float), eps, partition.blocks,
                        partition.resolutions, N, rng)


def gen_support_Ftilde_mf(mu, eps: float, N: int, partition: Partition, aux: AuxParams,
                          pool: ExplorationPool | None, rng: np.random.Generator) -> np.ndarray:
    """Blockwise auxiliary support; ``aux.M`` is the per-block count M'.

    With a single block this is :func:`gen_support_Ftilde` with M = M'.
    """
    mu = np.asarray(mu, dtype=float)
    R, Mp = partition.R, aux.M
    if R == 1:
        return gen_support_Ftilde(mu, eps, N, aux, pool, rng)
    out = grid_support(mu, eps, partition.blocks, partition.resolutions, N, rng,
                       extra=R * Mp + Mp)
    full = [draw_student_t(mu, aux.Sigma, aux.nu, aux.L, rng)]
    ranked = pool.ranked() if pool is not None and len(pool.scores) else np.zeros((0, len(mu)))
    for k in range(Mp - 1):
        full.append(ranked[k] if k < len(ranked) else draw_student_t(mu, aux.Sigma, aux.nu, aux.L, rng))
    full = np.asarray(full)
    # projections of each full point onto each block, then the full points
    for n0 in range(Mp):
        for r, b in enumerate(partition.blocks):
            out[N + n0 * R + r, list(b)] = full[n0, list(b)]
    out[N + R * Mp:] = full
    return out


# ---------------------------------------------------- blockwise estimates


def slice_mask(points, mu, block, radius=None) -> np.ndarray:
    """Points equal to ``mu`` off ``block`` (and within ``radius`` on it, if given)."""
    points = np.atleast_2d(points)
    off = np.ones(points.shape[1], dtype=bool)
    off[list(block)] = False
    mask = np.all(points[:, off] == mu[off], axis=1)
    if radius is not None:
        mask &= np.max(np.abs(points[:, list(block)] - mu[list(block)]), axis=1) <= radius
    return mask


def estimate_G_mf(points, log_weights, partition: Partition, mu, eps: float) -> np.ndarray:
    """Blockwise weighted means over the points of each block slice."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    log_weights = np.asarray(log_weights, dtype=float)
    if partition.R == 1:
        return softmax(log_weights) @ points
    mu = np.asarray(mu, dtype=float)
    out = np.empty(points.shape[1])
    for b in partition.blocks:
        I = slice_mask(points, mu, b, eps)
        if not I.any():
            raise InvariantViolation(f"no support point in the slice of block {_ranges(b)}")
        out[list(b)] = softmax(log_weights[I]) @ points[I][:, list(b)]
    return out


def estimate_Gtilde_mf(inputs: AuxEstimateInputs, partition: Partition, gw: GtWeights,
                       M_prime: int) -> GtildeResult:
    """Blockwise counterpart of :func:`estimate_Gtilde_full`.

    The mass test uses the smallest per-block reweighted mass; the mean
    branch assembles per-block reweighted means.
    """
    if partition.R == 1:
        return estimate_Gtilde_full(inputs, gw)
    N, R, Mp = inputs.N, partition.R, M_prime
    if inputs.M != (R + 1) * Mp:
        raise ConfigurationError(f"expected M = (R+1)M' = {(R + 1) * Mp}, got {inputs.M}")
    pts, lw, mu, eps = inputs.points, inputs.log_weights, inputs.mu, inputs.eps
    head = N + R * Mp
    est = np.empty(pts.shape[1])
    Zs = []
    for r, b in enumerate(partition.blocks):
        b = list(b)
        member = slice_mask(pts[:head], mu, b)
        grid = np.zeros(head, dtype=bool)
        grid[:N] = member[:N] & slice_mask(pts[:N], mu, b, eps)
        n_I = int(grid.sum())
        if n_I == 0:
            raise InvariantViolation(f"no auxiliary grid point in the slice of block {_ranges(b)}")
        idx = np.flatnonzero(member | grid)
        a = np.full(len(idx), 1.0 - gw.zeta2)
        a[grid[idx]] = gw.zeta1 * Mp / n_I
        a[idx == N + r] = gw.zeta2 * Mp
        inner = slice_mask(pts[idx], mu, b, (1.0 + gw.kappa) * eps)
        Zs.append(float(softmax(np.log(a) + lw[idx])[inner].sum()))

        projs = np.array([N + n0 * R + r for n0 in range(Mp)])
        J = projs[slice_mask(pts[projs], mu, b, (1.0 + 2.0 * gw.kappa) * eps)]
        use = np.concatenate([np.flatnonzero(grid), J])
        a_hat = np.empty(len(use))
        a_hat[:n_I] = gw.zeta3 * max(1, len(J)) / n_I
        a_hat[n_I:] = np.where(J == N + r, gw.zeta4 * len(J), 1.0 - gw.zeta4)
        est[b] = softmax(np.log(a_hat) + lw[use]) @ pts[use][:, b]
    Z = min(Zs)
    mode = pts[int(np.argmax(lw))].copy()
    if Z > gw.Delta:
        return GtildeResult(est, MEAN, Z, mode)
    return GtildeResult(mode, MODE, Z, mode)


# ------------------------------------------------- partition learning


@dataclass
class CorrEstimate:
    rho_hat: np.ndarray
    ess: float
    tau: int = 0
    T: float = float("nan")


def ess(weights) -> float:
    w = np.asarray(weights, dtype=float)
    return float(1.0 / np.sum(w * w))


def weighted_correlation(points, weights) -> CorrEstimate:
    """Correlation matrix of a weighted point set; ``weights`` must sum to one.

    Coordinates with zero weighted variance get zero correlation with the others.
    """
    x = np.atleast_2d(np.asarray(points, dtype=float))
    w = np.asarray(weights, dtype=float)
    m = w @ x
    xc = x - m
    C = (xc * w[:, None]).T @ xc
    sd = np.sqrt(np.clip(np.diag(C), 0.0, None))
    ok = sd > 1e-300 * (1.0 + np.abs(m))
    rho = np.zeros_like(C)
    if ok.any():
        s = np.where(ok, sd, 1.0)
        rho = C / np.outer(s, s)
        rho[~ok, :] = 0.0
        rho[:, ~ok] = 0.0
    rho = np.clip(0.5 * (rho + rho.T), -1.0, 1.0)
    np.fill_diagonal(rho, 1.0)
    return CorrEstimate(rho, ess(w))


def adapt_tau(t_gap: int, T_prev: float, ess_prev: float, N_mf: int) -> tuple[int, float]:
    """Next exponent T and block length tau = floor(t_gap^{1/T}).

    T grows by 0.1 when the previous ESS fell below a quarter of floor(N_mf/2),
    shrinks by 0.1 (not below 1) above three quarters, and is kept otherwise.
    An undefined previous ESS (NaN) keeps T.
    """
    half = N_mf // 2
    T = T_prev
    if ess_prev < half / 4:
        T = T_prev + 0.1
    elif ess_prev > 3 * half / 4:
        T = max(1.0, T_prev - 0.1)
    # the small offset keeps exact powers such as 1000^(1/3) from rounding down
    tau = max(1, int(math.floor(t_gap ** (1.0 / T) * (1.0 + 1e-12))))
    return min(tau, max(1, int(t_gap))), T


def aux_pool_sampler(center, xi: float, Sigma, N_aux: int, rng: np.random.Generator):
    """Candidate pool: floor(N_aux/2) uniform points on center +/- xi, the rest Gaussian.

    Returns ``(points, is_mf)`` where ``is_mf`` flags the uniform half used
    for correlation estimation.
    """
    if N_aux < 2:
        raise ConfigurationError("N_aux must be at least 2")
    center = np.atleast_1d(np.asarray(center, dtype=float))
    d = len(center)
    n_mf = N_aux // 2
    uni = center + rng.uniform(-xi, xi, size=(n_mf, d))
    chol = np.linalg.cholesky(np.atleast_2d(Sigma))
    gau = center + rng.standard_normal((N_aux - n_mf, d)) @ chol.T
    roles = np.zeros(N_aux, dtype=bool)
    roles[:n_mf] = True
    return np.vstack([uni, gau]), roles


def sigma_update(rho_hat, scale: float = 10.0) -> np.ndarray:
    """``scale * rho_hat``, with eigenvalues floored at 1e-6 trace/d when not SPD."""
    S = scale * 0.5 * (np.atleast_2d(rho_hat) + np.atleast_2d(rho_hat).T)
    d = S.shape[0]
    vals, vecs = np.linalg.eigh(S)
    floor = 1e-6 * np.trace(S) / d
    if vals.min() >= floor:
        return S
    S = (vecs * np.maximum(vals, floor)) @ vecs.T
    return 0.5 * (S + S.T)


# ------------------------------------------------------ minimum R-cut


def cut_value(abs_rho, labels) -> float:
    """Sum over ordered pairs of distinct blocks of |rho| between their coordinates."""
    labels = np.asarray(labels)
    cross = labels[:, None] != labels[None, :]
    return float(np.sum(abs_rho[cross]))


def _feasible_sizes(sizes, R, N, K, fixed):
    if len(sizes) != R or min(sizes) < 1:
        return False
    if fixed is not None:
        return sorted(sizes) == sorted(fixed)
    if N is not None:
        return sum(K**s for s in sizes) <= N
    return True


def _set_partitions(d, R):
    """Restricted-growth label vectors with exactly R blocks."""
    labels = [0] * d

    def rec(i, m):
        if i == d:
            if m == R:
                yield list(labels)
            return
        if R - m > d - i:
            return
        for v in range(min(m + 1, R)):
            labels[i] = v
            yield from rec(i + 1, max(m, v + 1))

    yield from rec(1, 1) if d else iter(())


def _stirling2(n, k):
    return sum((-1) ** i * math.comb(k, i) * (k - i) ** n for i in range(k + 1)) // math.factorial(k)


def _exact_two_way(A, d, ok_size, chunk=1 << 16):
    """Enumerate all 2-way splits with coordinate 0 in the first block."""
    best_val, best_mask = np.inf, None
    total = 1 << (d - 1)
    bits = np.arange(d - 1)
    rowsum = A.sum(axis=1)
    for start in range(0, total, chunk):
        masks = np.arange(start, min(start + chunk, total), dtype=np.int64)
        # x_i = 1 marks the second block; coordinate 0 stays in the first
        X = np.zeros((len(masks), d))
        X[:, 1:] = (masks[:, None] >> bits) & 1
        size2 = X.sum(axis=1).astype(int)
        keep = ok_size[size2]
        if not keep.any():
            continue
        X = X[keep]
        vals = 2.0 * (X @ rowsum - np.einsum("ij,jk,ik->i", X, A, X))
        k = int(np.argmin(vals))
        if vals[k] < best_val - 1e-12:
            best_val, best_mask = float(vals[k]), X[k].astype(int)
    return best_mask, best_val


def _local_search(A, labels, R, feasible, rng, max_rounds=200):
    labels = labels.copy()
    d = len(labels)
    # gain bookkeeping via block affinity: aff[i, r] = sum_{j in r} A_ij
    aff = np.zeros((d, R))
    for r in range(R):
        aff[:, r] = A[:, labels == r].sum(axis=1)
    sizes = np.bincount(labels, minlength=R)
    for _ in range(max_rounds):
        improved = False
        for i in rng.permutation(d):
            a = labels[i]
            for b in range(R):
                if b == a:
                    continue
                new_sizes = sizes.copy()
                new_sizes[a] -= 1
                new_sizes[b] += 1
                if not feasible(tuple(new_sizes)):
                    continue
                gain = aff[i, b] - aff[i, a]
                if gain > 1e-12:
                    aff[:, a] -= A[:, i]
                    aff[:, b] += A[:, i]
                    labels[i], sizes = b, new_sizes
                    a = b
                    improved = True
        for i in range(d):
            for j in range(i + 1, d):
                a, b = labels[i], labels[j]
                if a == b:
                    continue
                gain = aff[i, b] - aff[i, a] + aff[j, a] - aff[j, b] - 2.0 * A[i, j]
                if gain > 1e-12:
                    aff[:, a] += A[:, j] - A[:, i]
                    aff[:, b] += A[:, i] - A[:, j]
                    labels[i], labels[j] = b, a
                    improved = True
        if not improved:
            break
    return labels


def _spectral_seed(A, R, feasible_sizes):
    d = len(A)
    L = np.diag(A.sum(axis=1)) - A
    _, vecs = np.linalg.eigh(L)
    order = np.argsort(vecs[:, 1], kind="stable")
    sizes = feasible_sizes
    labels = np.empty(d, dtype=int)
    start = 0
    for r, s in enumerate(sizes):
        labels[order[start:start + s]] = r
        start += s
    return labels


def _canonical(labels):
    """Relabel blocks in order of their smallest coordinate."""
    mapping, out = {}, np.empty_like(labels)
    for i, v in enumerate(labels):
        mapping.setdefault(int(v), len(mapping))
        out[i] = mapping[int(v)]
    return out


def min_rcut_partition(rho_hat, R: int, N: int | None = None, sizes=None,
                       exact_limit: int = 10**6, restarts: int = 8,
                       seed: int = 0) -> tuple[Partition, float]:
    """Partition minimizing the cross-block sum of |rho_hat|.

    Feasible partitions have exactly R non-empty blocks and either the
    prescribed multiset ``sizes`` or, when ``N`` is given instead, satisfy
    sum_r K^{|S_r|} <= N with K the common resolution of the balanced split.
    The search is exhaustive when the number of candidates is at most
    ``exact_limit`` and a seeded local search otherwise.

    Returns the partition (with per-block resolutions when ``N`` is given,
    else resolutions of 1) and its cut value.
    """
    A = np.abs(np.asarray(rho_hat, dtype=float))
    d = A.shape[0]
    A = 0.5 * (A + A.T)
    np.fill_diagonal(A, 0.0)
    if R < 1 or R > d:
        raise ConfigurationError("need 1 <= R <= d")
    K = common_resolution(N, balanced_sizes(d, R)) if N is not None else None
    fixed = tuple(sizes) if sizes is not None else None

    def feasible(sz):
        return _feasible_sizes(sz, R, N, K, fixed)

    def finish(labels):
        labels = _canonical(np.asarray(labels, dtype=int))
        blocks = [tuple(np.flatnonzero(labels == r)) for r in range(R)]
        res = resolutions_for_sizes(N, [len(b) for b in blocks]) if N is not None else (1,) * R
        return Partition(tuple(blocks), res), cut_value(A, labels)

    if R == 1:
        return finish(np.zeros(d, dtype=int))
    if R == 2 and (1 << (d - 1)) <= exact_limit:
        ok = np.array([feasible((d - s, s)) for s in range(d + 1)])
        labels, _ = _exact_two_way(A, d, ok)
        if labels is None:
            raise ConfigurationError("no feasible two-block partition")
        return finish(labels)
    if _stirling2(d, R) <= exact_limit:
        best, best_val = None, np.inf
        for labels in _set_partitions(d, R):
            lab = np.asarray(labels)
            if not feasible(tuple(np.bincount(lab, minlength=R))):
                continue
            v = cut_value(A, lab)
            if v < best_val - 1e-12:
                best, best_val = lab, v
        if best is None:
            raise ConfigurationError("no feasible partition")
        return finish(best)
    # heuristic search: spectral seed plus random restarts, then local moves and swaps
    rng = np.random.default_rng(seed)
    base = fixed if fixed is not None else balanced_sizes(d, R)
    seeds = [_spectral_seed(A, R, base)]
    for _ in range(restarts):
        lab = np.repeat(np.arange(R), base)
        seeds.append(rng.permutation(lab))
    best, best_val = None, np.inf
    for lab in seeds:
        lab = _local_search(A, lab, R, feasible, rng)
        v = cut_value(A, lab)
        if v < best_val - 1e-12:
            best, best_val = lab, v
    return finish(best)


@dataclass
class PartitionLearner:
    """Adaptive state used to relearn the partition at every perturbation."""

    N: int
    d: int
    N_aux: int
    T: float = 3.0
    tau: int = 1
    ess: float = float("nan")
    cut: float = float("nan")
    Sigma: np.ndarray = None
    partition: Partition = None
    fixed: Partition | None = None
    min_ess: float = 4.0
    history: list = field(default_factory=list)

    def __post_init__(self):
        if self.Sigma is None:
            self.Sigma = 10.0 * np.eye(self.d)
        if self.partition is None:
            self.partition = self.fixed if self.fixed is not None else default_partition(self.N, self.d)

    @property
    def N_mf(self) -> int:
        return self.N_aux // 2

    def update(self, pool_points, short_scores) -> CorrEstimate:
        """Learn from the uniform-role pool points scored over the first tau observations."""
        W = softmax(np.asarray(short_scores, dtype=float))
        est = weighted_correlation(pool_points, W)
        self.ess = est.ess
        self.Sigma = sigma_update(est.rho_hat)
        R = self.partition.R
        if self.fixed is None and R > 1 and est.ess >= self.min_ess:
            self.partition, self.cut = min_rcut_partition(est.rho_hat, R, N=self.N)
        elif self.fixed is None and R > 1:
            self.cut = cut_value(np.abs(est.rho_hat), self.partition.labels())
        est.tau, est.T = self.tau, self.T
        return est

    def next_tau(self, t_gap: int) -> int:
        self.tau, self.T = adapt_tau(t_gap, self.T, self.ess, self.N_mf)
        return self.tau

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from perturbed_bayes.errors import ConfigurationError, InvariantViolation
from perturbed_bayes.estimators import (MEAN, MODE, AuxEstimateInputs, GtWeights, estimate_G,
                                        estimate_Gtilde_full)
from perturbed_bayes.meanfield import (Partition, PartitionLearner, adapt_tau, aux_pool_sampler,
                                       block_sizes_and_resolutions, common_resolution, cut_value,
                                       default_partition, ess, estimate_G_mf, estimate_Gtilde_mf,
                                       gen_support_F_mf, gen_support_Ftilde_mf, min_rcut_partition,
                                       partition_for_blocks, r_of_n, resolutions_for_sizes,
                                       sigma_update, slice_mask, weighted_correlation)
from perturbed_bayes.particles import ParticleSystem
from perturbed_bayes.support import AuxParams, ExplorationPool, gen_support_F, gen_support_Ftilde

GW = GtWeights()


def compositions(d, R):
    """All ordered tuples of R positive integers summing to d."""
    for cuts in itertools.combinations(range(1, d), R - 1):
        bounds = (0,) + cuts + (d,)
        yield tuple(b - a for a, b in zip(bounds, bounds[1:]))


def brute_r(N, d):
    return min(R for R in range(1, d + 1)
               if any(sum(2**s for s in c) <= N for c in compositions(d, R)))


def brute_K(N, d, R):
    return max(K for K in range(1, N + 1)
               if any(sum(K**s for s in c) <= N for c in compositions(d, R)))


def brute_two_way(A, ok):
    d = len(A)
    best = np.inf
    for labels in itertools.product((0, 1), repeat=d):
        lab = np.array(labels)
        s = int(lab.sum())
        if 0 < s < d and ok(tuple(np.bincount(lab, minlength=2))):
            best = min(best, cut_value(A, lab))
    return best


def random_abs_corr(rng, d):
    X = rng.normal(size=(3 * d, d)) @ rng.normal(size=(d, d))
    return np.abs(np.corrcoef(X.T))


# ----------------------------------------------------------- arithmetic


def test_r_of_n_and_resolution_match_exhaustive_search():
    for d in range(1, 9):
        for N in range(2 * d, 301):
            R = r_of_n(N, d)
            assert R == brute_r(N, d), (N, d)
            sizes, K, Ks = block_sizes_and_resolutions(N, d)
            assert K == brute_K(N, d, R), (N, d)
            assert max(sizes) - min(sizes) <= 1 and sum(sizes) == d
            assert min(Ks) >= K
            total = sum(k**s for k, s in zip(Ks, sizes))
            assert total <= N
            # maximality: no single increment still fits
            assert all(total - k**s + (k + 1) ** s > N for k, s in zip(Ks, sizes))


@pytest.mark.parametrize("N,d,R", [(16, 4, 1), (8, 4, 2), (35000, 20, 2), (2**20, 20, 1)])
def test_r_of_n_examples(N, d, R):
    assert r_of_n(N, d) == R


def test_resolution_examples():
    assert block_sizes_and_resolutions(4096, 4, 1)[:2] == ((4,), 8)
    sizes, K, _ = block_sizes_and_resolutions(8, 3, 2)
    assert sorted(sizes) == [1, 2] and K == 2
    assert block_sizes_and_resolutions(4, 2, 1)[1] == 2


def test_r_of_n_needs_2d_points():
    with pytest.raises(ConfigurationError):
        r_of_n(7, 4)


def test_partition_validation_and_digest():
    p = Partition(((1, 2, 3, 4, 5, 6, 7, 8, 9), (0, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19)), (2, 2))
    assert p.digest() == "2-10|1,11-20"
    assert p.sizes == (9, 11) and p.R == 2 and p.d == 20
    assert Partition.from_labels(p.labels(), (2, 2)).same_blocks(p)
    with pytest.raises(ConfigurationError):
        Partition(((0, 1), (1, 2)), (2, 2))
    with pytest.raises(ConfigurationError):
        Partition(((0,), (2,)), (2, 2))


# ------------------------------------------------------------- supports


def test_two_exhaustive_example_in_three_dimensions():
    part = partition_for_blocks(6, [[0], [1, 2]])
    assert part.resolutions == (2, 2)
    pts = gen_support_F_mf(np.zeros(3), 1.0, 6, part, np.random.default_rng(0))
    expected = {(-0.5, 0, 0), (0.5, 0, 0), (0, -0.5, -0.5), (0, -0.5, 0.5), (0, 0.5, -0.5), (0, 0.5, 0.5)}
    assert set(map(tuple, pts)) == expected


def test_single_block_reduces_bitwise():
    mu, eps, N = np.array([0.3, -1.0, 2.0]), 0.7, 40
    part = default_partition(N, 3)
    assert part.R == 1
    a = gen_support_F_mf(mu, eps, N, part, np.random.default_rng(4))
    b = gen_support_F(mu, eps, N, np.random.default_rng(4))
    np.testing.assert_array_equal(a, b)
    aux = AuxParams(np.eye(3), M=2)
    pool = ExplorationPool(np.ones((3, 3)), np.arange(3.0))
    a = gen_support_Ftilde_mf(mu, eps, N, part, aux, pool, np.random.default_rng(5))
    b = gen_support_Ftilde(mu, eps, N, aux, pool, np.random.default_rng(5))
    np.testing.assert_array_equal(a, b)
    lw = np.random.default_rng(6).normal(size=N + 2)
    inp = AuxEstimateInputs(eps, mu, lw, a, N, 2)
    r1, r2 = estimate_Gtilde_mf(inp, part, GW, 2), estimate_Gtilde_full(inp, GW)
    np.testing.assert_array_equal(r1.estimate, r2.estimate)
    np.testing.assert_array_equal(estimate_G_mf(a[:N], lw[:N], part, mu, eps),
                                  estimate_G(ParticleSystem(a[:N], lw[:N])))


@given(seed=st.integers(0, 2**32 - 1), d=st.integers(2, 9), extra=st.integers(0, 40),
       eps=st.floats(1e-3, 10.0))
@settings(max_examples=1000, deadline=None)
def test_blockwise_support_invariants(seed, d, extra, eps):
    rng = np.random.default_rng(seed)
    labels = np.concatenate([np.arange(min(d, 3)), rng.integers(0, min(d, 3), size=d - min(d, 3))])
    rng.shuffle(labels)
    blocks = [tuple(np.flatnonzero(labels == r)) for r in range(labels.max() + 1)]
    N = sum(2 ** len(b) for b in blocks) + extra
    part = partition_for_blocks(N, blocks)
    mu = rng.normal(size=d)
    pts = gen_support_F_mf(mu, eps, N, part, rng)
    assert pts.shape == (N, d)
    assert np.max(np.abs(pts - mu)) <= eps
    row = 0
    for b, K in zip(part.blocks, part.resolutions):
        inside = slice_mask(pts, mu, b, eps)
        assert inside[row:row + K ** len(b)].all()
        row += K ** len(b)
        # every cell of the block slice occupied
        rel = np.floor((pts[inside][:, list(b)] - mu[list(b)] + eps) * K / (2 * eps)).clip(0, K - 1)
        assert len({tuple(r) for r in rel.astype(int)}) == K ** len(b)
    # each point differs from mu on at most one block
    member = np.array([slice_mask(pts, mu, b) for b in part.blocks])
    assert member.any(axis=0).all()


def test_auxiliary_layout():
    part = partition_for_blocks(20, [[0, 2], [1, 3]])
    mu = np.array([1.0, 2.0, 3.0, 4.0])
    pool = ExplorationPool(np.full((1, 4), 7.0), np.zeros(1))
    pts = gen_support_Ftilde_mf(mu, 0.5, 20, part, AuxParams(np.eye(4), M=2), pool,
                                np.random.default_rng(0))
    R, Mp, N = 2, 2, 20
    assert pts.shape == (N + (R + 1) * Mp, 4)
    full = pts[N + R * Mp:]
    np.testing.assert_array_equal(full[1], np.full(4, 7.0))
    for n0 in range(Mp):
        for r, b in enumerate(part.blocks):
            proj = pts[N + n0 * R + r]
            np.testing.assert_array_equal(proj[list(b)], full[n0, list(b)])
            off = [i for i in range(4) if i not in b]
            np.testing.assert_array_equal(proj[off], mu[off])


# ------------------------------------------------------------ estimates


def cross_inputs(t_draw, lw=None):
    pts = np.array([[-0.5, 0], [0.5, 0], [0, -0.5], [0, 0.5],
                    [t_draw[0], 0], [0, t_draw[1]], t_draw], dtype=float)
    lw = np.zeros(7) if lw is None else lw
    return AuxEstimateInputs(1.0, np.zeros(2), lw, pts, 4, 3)


def test_blockwise_mass_test_hand_example():
    part = partition_for_blocks(4, [[0], [1]])
    res = estimate_Gtilde_mf(cross_inputs([3.0, 0.2]), part, GW, 1)
    assert res.Z == pytest.approx(2 / 3, rel=1e-15)
    assert res.branch == MODE
    res = estimate_Gtilde_mf(cross_inputs([1.5, 0.2]), part, GW, 1)
    assert res.Z == pytest.approx(1.0) and res.branch == MEAN
    np.testing.assert_allclose(res.estimate, [0.5, 0.2 / 3], rtol=1e-14)


def test_blockwise_estimates_symmetry_and_saturation():
    part = partition_for_blocks(6, [[0], [1, 2]])
    pts = gen_support_F_mf(np.zeros(3), 1.0, 6, part, np.random.default_rng(0))
    np.testing.assert_allclose(estimate_G_mf(pts, np.zeros(6), part, np.zeros(3), 1.0), 0.0, atol=1e-15)
    lw = np.zeros(6)
    lw[1] = 800.0
    lw[4] = 800.0
    est = estimate_G_mf(pts, lw, part, np.zeros(3), 1.0)
    np.testing.assert_allclose(est, [pts[1, 0], pts[4, 1], pts[4, 2]], atol=1e-12)
    with pytest.raises(InvariantViolation):
        estimate_G_mf(np.full((6, 3), 5.0), lw, part, np.zeros(3), 1.0)


def test_all_points_equal():
    part = partition_for_blocks(4, [[0], [1]])
    v = np.array([0.2, -0.1])
    inp = AuxEstimateInputs(1.0, v, np.random.default_rng(0).normal(size=7), np.tile(v, (7, 1)), 4, 3)
    np.testing.assert_allclose(estimate_Gtilde_mf(inp, part, GW, 1).estimate, v, rtol=1e-15)


def test_layout_mismatch_is_rejected():
    part = partition_for_blocks(4, [[0], [1]])
    inp = AuxEstimateInputs(1.0, np.zeros(2), np.zeros(6), np.zeros((6, 2)), 4, 2)
    with pytest.raises(ConfigurationError):
        estimate_Gtilde_mf(inp, part, GW, 1)


# ----------------------------------------------------- learning pieces


def test_ess_examples():
    assert ess(np.full(8, 1 / 8)) == pytest.approx(8.0)
    assert ess([1.0, 0.0, 0.0]) == 1.0
    assert ess([0.5, 0.25, 0.25]) == pytest.approx(1 / 0.375)


def test_weighted_correlation_cases():
    x = np.linspace(0, 1, 50)
    est = weighted_correlation(np.c_[x, 3 * x + 1], np.full(50, 1 / 50))
    np.testing.assert_allclose(est.rho_hat, np.ones((2, 2)), atol=1e-12)
    rng = np.random.default_rng(0)
    n = 20_000
    est = weighted_correlation(rng.normal(size=(n, 3)), np.full(n, 1 / n))
    assert np.max(np.abs(est.rho_hat - np.eye(3))) < 5 / np.sqrt(n)
    w = np.zeros(10)
    w[3] = 1.0
    est = weighted_correlation(rng.normal(size=(10, 3)), w)
    np.testing.assert_array_equal(est.rho_hat, np.eye(3))
    assert est.ess == 1.0


@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 40), d=st.integers(1, 6))
@settings(max_examples=200, deadline=None)
def test_weighted_correlation_bounds(seed, n, d):
    rng = np.random.default_rng(seed)
    w = rng.dirichlet(np.ones(n))
    est = weighted_correlation(rng.normal(size=(n, d)), w)
    assert np.all(np.abs(est.rho_hat) <= 1 + 1e-9)
    np.testing.assert_array_equal(est.rho_hat, est.rho_hat.T)
    assert 1 - 1e-9 <= est.ess <= n + 1e-9


def test_adapt_tau_rules():
    assert adapt_tau(1000, 3.0, float("nan"), 100) == (10, 3.0)
    assert adapt_tau(1000, 3.0, 30.0, 200)[1] == 3.0   # inside the band [25, 75]
    assert adapt_tau(1000, 3.0, 10.0, 200)[1] == pytest.approx(3.1)
    assert adapt_tau(1000, 3.0, 90.0, 200)[1] == pytest.approx(2.9)
    T, taus = 1.0, []
    for _ in range(5):
        tau, T = adapt_tau(10**6, T, 1.0, 200)
        taus.append(tau)
    assert T == pytest.approx(1.5) and taus == sorted(taus, reverse=True)
    assert adapt_tau(5, 1.0, 1e9, 200) == (5, 1.0)


def test_pool_sampler():
    rng = np.random.default_rng(0)
    c = np.array([1.0, -2.0, 3.0])
    pts, roles = aux_pool_sampler(c, 0.5, np.eye(3), 2, rng)
    assert roles.tolist() == [True, False]
    pts, roles = aux_pool_sampler(c, 0.5, 4 * np.eye(3), 40_001, rng)
    assert roles.sum() == 20_000
    assert np.all(np.abs(pts[roles] - c) <= 0.5)
    gau = pts[~roles]
    assert np.all(np.abs(gau.mean(axis=0) - c) < 4 * 2 / np.sqrt(len(gau)))
    with pytest.raises(ConfigurationError):
        aux_pool_sampler(c, 0.5, np.eye(3), 1, rng)


def test_sigma_update():
    np.testing.assert_array_equal(sigma_update(np.eye(3)), 10 * np.eye(3))
    np.testing.assert_array_equal(sigma_update(np.eye(1)), [[10.0]])
    rho = np.array([[1.0, 1.01], [1.01, 1.0]])  # eigenvalue -0.01
    S = sigma_update(rho)
    assert np.linalg.eigvalsh(S).min() > 0
    np.linalg.cholesky(S)


# --------------------------------------------------------------- min-cut


def test_min_cut_matches_brute_force():
    rng = np.random.default_rng(2024)
    for k in range(100):
        d = 2 + k % 9
        A = random_abs_corr(rng, d)
        part, val = min_rcut_partition(A, 2)
        assert val == pytest.approx(brute_two_way(A, lambda sz: True), abs=1e-10)
        assert val == pytest.approx(cut_value(A, part.labels()), abs=1e-12)
        s = 1 + k % (d - 1) if d > 2 else 1
        part, val = min_rcut_partition(A, 2, sizes=(d - s, s))
        assert sorted(part.sizes) == sorted((d - s, s))
        assert val == pytest.approx(brute_two_way(A, lambda sz: sorted(sz) == sorted((d - s, s))),
                                    abs=1e-10)


def test_min_cut_three_blocks_matches_brute_force():
    rng = np.random.default_rng(7)
    for d in range(3, 8):
        A = random_abs_corr(rng, d)
        best = min(cut_value(A, np.array(lab)) for lab in itertools.product(range(3), repeat=d)
                   if len(set(lab)) == 3)
        assert min_rcut_partition(A, 3)[1] == pytest.approx(best, abs=1e-10)


def test_min_cut_recovers_block_pattern():
    d = 20
    rng = np.random.default_rng(3)
    g = np.array([1] + [0] * 9 + [1] * 10)
    A = np.where(g[:, None] == g[None, :], 0.6, 0.02) + 0.01 * rng.uniform(size=(d, d))
    A = 0.5 * (A + A.T)
    np.fill_diagonal(A, 1.0)
    part, _ = min_rcut_partition(A, 2, N=35_000)
    assert part.same_blocks(Partition(((1, 2, 3, 4, 5, 6, 7, 8, 9),
                                       (0, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19)), (1, 1)))
    assert sum(k**s for k, s in zip(part.resolutions, part.sizes)) <= 35_000


def test_min_cut_trivial_and_feasibility():
    A = random_abs_corr(np.random.default_rng(0), 5)
    part, val = min_rcut_partition(A, 1)
    assert part.R == 1 and val == 0.0
    # N=8, d=4: only (2, 2) splits fit with K=2
    part, _ = min_rcut_partition(A[:4, :4], 2, N=8)
    assert part.sizes == (2, 2)


def test_heuristic_beats_random_partitions():
    rng = np.random.default_rng(11)
    d, R = 14, 4
    A = random_abs_corr(rng, d)
    part, val = min_rcut_partition(A, R, exact_limit=0)
    sizes = part.sizes
    base = np.repeat(np.arange(R), sizes)
    rand = [cut_value(A, rng.permutation(base)) for _ in range(1000)]
    assert val <= min(rand) + 1e-12


def test_learner_reuses_partition_when_degenerate():
    L = PartitionLearner(N=40, d=8, N_aux=100)
    before = L.partition
    pts = np.random.default_rng(0).normal(size=(50, 8))
    scores = np.full(50, -1e6)
    scores[0] = 0.0
    est = L.update(pts, scores)
    assert est.ess == pytest.approx(1.0)
    assert L.partition == before
    scores = np.zeros(50)
    L.update(pts, scores)
    assert L.partition.R == before.R
    assert common_resolution(40, L.partition.sizes) >= 1
    assert L.partition.resolutions == resolutions_for_sizes(40, L.partition.sizes)

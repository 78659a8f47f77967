import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from perturbed_bayes.errors import ModelEvaluationError
from perturbed_bayes.models import GaussianLocation, Model, Observations
from perturbed_bayes.particles import (ParticleSystem, bayes_update, concentration_check,
                                       loglik_increments, reset_weights, softmax)
from perturbed_bayes.tiling import TileRunner


class FixedLogf(Model):
    """Returns preset log-densities per particle, ignoring the observation."""

    def __init__(self, values):
        self.values = np.asarray(values, dtype=float)
        self.dim = 1

    def loglik_matrix(self, points, obs):
        return np.repeat(self.values[:, None], len(obs), axis=1)


def mp_normalized_products(points, z, sigma=1.0):
    """Normalized products of Gaussian densities, computed in 50-digit arithmetic."""
    mpmath.mp.dps = 50
    dens = []
    for th in points:
        prod = mpmath.mpf(1)
        for y in z:
            r = [mpmath.mpf(float(y[i])) - mpmath.mpf(float(th[i])) for i in range(len(th))]
            sq = sum(v * v for v in r)
            prod *= mpmath.exp(-sq / (2 * sigma**2)) / (2 * mpmath.pi * sigma**2) ** (mpmath.mpf(len(th)) / 2)
        dens.append(prod)
    total = sum(dens)
    return np.array([float(v / total) for v in dens])


def test_single_particle_normalizes():
    sys = ParticleSystem.uniform([[3.0]])
    bayes_update(sys, Observations(np.array([1.0, 2.0])), GaussianLocation())
    assert sys.normalized_weights().tolist() == [1.0]


def test_two_particle_closed_form():
    sys = ParticleSystem.uniform([[0.0], [1.0]])
    bayes_update(sys, Observations(np.zeros(1)), FixedLogf([-1.0, -3.0]))
    w = sys.normalized_weights()
    e = np.exp([-1.0, -3.0])
    np.testing.assert_allclose(w, e / e.sum(), rtol=1e-15)
    assert w[0] == pytest.approx(0.8808, abs=1e-4)
    assert sys.posterior_mean()[0] == pytest.approx(0.1192, abs=1e-4)


@pytest.mark.parametrize("seed", range(5))
def test_sequential_updates_match_extended_precision(seed):
    rng = np.random.default_rng(seed)
    d, N, T = 1 + seed % 3, 4 + 3 * seed, 300
    points = rng.normal(size=(N, d))
    z = rng.normal(0.3, 1.0, size=(T, d))
    sys = ParticleSystem.uniform(points)
    model = GaussianLocation(d)
    for k in range(0, T, 37):
        bayes_update(sys, Observations(z[k:k + 37]), model)
    np.testing.assert_allclose(sys.normalized_weights(), mp_normalized_products(points, z), rtol=1e-10)


def test_non_finite_increment_is_rejected():
    sys = ParticleSystem.uniform([[0.0], [1.0]])
    before = sys.log_weights.copy()
    with pytest.raises(ModelEvaluationError):
        bayes_update(sys, Observations(np.zeros(1)), FixedLogf([-1.0, -np.inf]))
    np.testing.assert_array_equal(sys.log_weights, before)
    with pytest.raises(ModelEvaluationError):
        bayes_update(sys, Observations(np.zeros(1)), FixedLogf([np.nan, 0.0]))
    np.testing.assert_array_equal(sys.log_weights, before)


def test_reset_then_updates_equals_fresh_system():
    rng = np.random.default_rng(1)
    pts = rng.normal(size=(6, 2))
    obs = Observations(rng.normal(size=(40, 2)))
    model = GaussianLocation(2)
    a = ParticleSystem.uniform(pts)
    bayes_update(a, Observations(rng.normal(size=(10, 2))), model)
    reset_weights(a, 10)
    assert a.block_start_t == 10
    np.testing.assert_array_equal(a.normalized_weights(), np.full(6, 1 / 6))
    assert a.mass_in_ball(np.zeros(2), 1e6) == pytest.approx(1.0, abs=1e-15)
    bayes_update(a, obs, model)
    b = bayes_update(ParticleSystem.uniform(pts), obs, model)
    np.testing.assert_array_equal(a.log_weights, b.log_weights)


def test_mean_of_symmetric_support():
    c = np.array([1.5, -2.0])
    pts = c + np.array([[1, 1], [-1, -1], [2, -3], [-2, 3]], dtype=float)
    assert np.allclose(ParticleSystem.uniform(pts).posterior_mean(), c, atol=1e-15)


def test_dominant_weight_saturates():
    sys = ParticleSystem(np.array([[0.0], [1.0], [2.0]]), np.array([0.0, 700.0, 0.0]))
    assert abs(sys.posterior_mean()[0] - 1.0) < 1e-12


@given(lw=hnp.arrays(float, st.integers(1, 30), elements=st.floats(-50, 50)),
       shift=st.floats(-1e3, 1e3))
@settings(max_examples=200, deadline=None)
def test_mean_invariant_to_constant_shift(lw, shift):
    pts = np.linspace(-1, 1, len(lw))[:, None]
    a = ParticleSystem(pts, lw).posterior_mean()
    b = ParticleSystem(pts, lw + shift).posterior_mean()
    assert np.allclose(a, b, rtol=1e-12, atol=1e-12)
    w = softmax(lw)
    assert abs(w.sum() - 1.0) < 1e-12
    assert pts.min() - 1e-12 <= a[0] <= pts.max() + 1e-12


def test_permutation_of_particles_is_bitwise_neutral():
    rng = np.random.default_rng(3)
    pts = rng.normal(size=(50, 3))
    obs = Observations(rng.normal(size=(200, 3)))
    model = GaussianLocation(3)
    perm = rng.permutation(50)
    a = bayes_update(ParticleSystem.uniform(pts), obs, model)
    b = bayes_update(ParticleSystem.uniform(pts[perm]), obs, model)
    inv = np.argsort(perm)
    np.testing.assert_array_equal(a.log_weights, b.log_weights[inv])


def test_tiled_increments_match_single_thread():
    rng = np.random.default_rng(4)
    pts = rng.normal(size=(5000, 2))
    obs = Observations(rng.normal(size=(30, 2)))
    model = GaussianLocation(2)
    ref = loglik_increments(pts, obs, model)
    runner = TileRunner(workers=3)
    try:
        np.testing.assert_array_equal(loglik_increments(pts, obs, model, runner), ref)
    finally:
        runner.close()


def test_concentration_on_kl_minimizer():
    rng = np.random.default_rng(0)
    obs = Observations(rng.normal(size=200))
    idx, w = concentration_check(np.array([[0.0], [5.0]]), GaussianLocation(), obs)
    assert idx == 0 and w[0] > 0.999


def test_concentration_with_exact_truth_present():
    rng = np.random.default_rng(1)
    obs = Observations(rng.normal(2.0, 1.0, size=500))
    idx, _ = concentration_check(np.array([[-1.0], [2.0], [4.0]]), GaussianLocation(), obs)
    assert idx == 1


def test_identical_points_share_mass():
    rng = np.random.default_rng(2)
    _, w = concentration_check(np.array([[0.7], [0.7]]), GaussianLocation(),
                               Observations(rng.normal(size=1000)))
    assert w.tolist() == [0.5, 0.5]


def test_record_round_trip():
    sys = ParticleSystem(np.array([[0.1, 0.2], [0.3, 0.4]]), np.array([-1.0, 2.5]), 17)
    back = ParticleSystem.from_record(sys.to_record())
    np.testing.assert_array_equal(back.points, sys.points)
    np.testing.assert_array_equal(back.log_weights, sys.log_weights)
    assert back.block_start_t == 17


def test_invalid_shapes():
    with pytest.raises(ValueError):
        ParticleSystem(np.zeros((2, 1)), np.zeros(3))
    with pytest.raises(ValueError):
        ParticleSystem(np.zeros((0, 1)), np.zeros(0))
    assert math.isclose(ParticleSystem.uniform(np.zeros((4, 1))).mass_in_ball([0.0], 0.0), 1.0)

import math

import numpy as np
import pytest

from perturbed_bayes.data import (NL1_COV, ArrayStream, CSVStream, GeneratorStream, gen_gmm_demo,
                                  gen_linear, gen_mixture, gen_nl1, gen_nl2, linear_sigma_x,
                                  mixture_theta_star, write_csv)
from perturbed_bayes.errors import ConfigurationError
from perturbed_bayes.models import MixtureDemo, MixtureLogistic, Observations, mean_nl1


def test_nl2_first_covariate_is_one():
    obs = gen_nl2(np.random.default_rng(0), 500, 6)
    assert np.all(obs.x[:, 0] == 1.0)
    assert obs.x[:, 1:].min() >= 0.0 and obs.x[:, 1:].max() <= 1.0


def test_nl1_covariate_law():
    obs = gen_nl1(np.random.default_rng(1), 100_000)
    cov = np.cov(obs.x[:, :2].T)
    assert np.all(np.abs(cov - NL1_COV) <= 0.05 * np.abs(NL1_COV))
    assert 0.0 <= obs.x[:, 2].min() and obs.x[:, 2].max() <= 20.0


def test_nl1_noise_is_standard_normal():
    rng = np.random.default_rng(2)
    obs = gen_nl1(rng, 50_000)
    resid = obs.z - mean_nl1(np.array([70.0, 10.0, 3.0, 10.0]), obs.x)
    assert abs(resid.mean()) < 0.02 and abs(resid.std() - 1.0) < 0.02


def test_mixture_weight_logit():
    theta = mixture_theta_star(np.random.default_rng(0), x_dim=3)
    assert theta[0] == pytest.approx(math.log(0.7 / 0.3), rel=1e-15)
    assert theta[0] == pytest.approx(0.8473, abs=1e-4)


def test_mixture_response_frequency():
    rng = np.random.default_rng(3)
    theta = mixture_theta_star(rng, 3)
    obs = gen_mixture(rng, 40_000, theta, 2, 3)
    assert set(np.unique(obs.z)) <= {0.0, 1.0}
    assert np.all(obs.x[:, 0] == 1.0)
    expected = MixtureLogistic(2, 3).predict_proba(theta, obs.x).mean()
    assert abs(obs.z.mean() - expected) < 4 * math.sqrt(expected * (1 - expected) / 40_000)


@pytest.mark.parametrize("rho", [0.0, 0.1, 0.3])
def test_linear_sigma_is_spd_with_unit_max(rho):
    S = linear_sigma_x(np.random.default_rng(4), rho=rho)
    assert S.shape == (19, 19)
    np.testing.assert_array_equal(S, S.T)
    assert np.max(np.abs(S)) == 1.0
    assert np.linalg.eigvalsh(S).min() > 0
    if rho == 0.0:
        assert np.all(S[:9, 9:] == 0.0)


def test_linear_sigma_rejection_limit():
    with pytest.raises(ConfigurationError):
        linear_sigma_x(np.random.default_rng(0), rho=50.0, max_tries=5)


def test_linear_design():
    rng = np.random.default_rng(5)
    S = linear_sigma_x(rng)
    theta = np.arange(1.0, 21.0)
    obs = gen_linear(rng, 60_000, theta, S)
    assert np.all(obs.x[:, 0] == 1.0)
    np.testing.assert_allclose(np.cov(obs.x[:, 1:].T), S, atol=0.03)


def test_gmm_demo_centre_mass():
    obs = gen_gmm_demo(np.random.default_rng(6), 20_000)
    # components sit 10 sd apart, so |z| < 0.5 is the central component
    near = np.mean(np.abs(obs.z) < 0.5)
    assert near == pytest.approx(MixtureDemo().alpha[10], abs=0.015)


def test_generator_stream_independent_of_read_sizes():
    fn = lambda rng, n: gen_nl1(rng, n)
    a = GeneratorStream(fn, seed=7, total=10_000, block=512)
    b = GeneratorStream(fn, seed=7, total=10_000, block=512)
    whole = a.read(10_000)
    pieces, sizes = [], [1, 3, 700, 5000, 4296, 100]
    for s in sizes:
        out = b.read(s)
        if out is None:
            break
        pieces.append(out)
    np.testing.assert_array_equal(np.concatenate([p.z for p in pieces]), whole.z)
    np.testing.assert_array_equal(np.concatenate([p.x for p in pieces]), whole.x)
    assert a.read(1) is None and b.read(5) is None


def test_array_stream_and_iteration():
    obs = Observations(np.arange(5.0))
    s = ArrayStream(obs)
    assert [float(o.z[0]) for o in s] == [0.0, 1.0, 2.0, 3.0, 4.0]
    assert s.read(3) is None


def test_csv_round_trip(tmp_path):
    obs = gen_nl1(np.random.default_rng(8), 37)
    path = tmp_path / "d.csv"
    write_csv(path, obs)
    s = CSVStream(path, x_dim=3)
    parts = [s.read(10) for _ in range(4)]
    assert s.read(10) is None
    np.testing.assert_array_equal(np.concatenate([p.z for p in parts]), obs.z)
    np.testing.assert_array_equal(np.concatenate([p.x for p in parts]), obs.x)


def test_csv_shuffle_is_seeded_permutation(tmp_path):
    obs = Observations(np.arange(50.0), np.arange(50.0)[:, None] * 2)
    path = tmp_path / "d.csv"
    write_csv(path, obs)
    a = CSVStream(path, shuffle_seed=3).read(100)
    b = CSVStream(path, shuffle_seed=3).read(100)
    np.testing.assert_array_equal(a.z, b.z)
    assert sorted(a.z) == list(obs.z) and not np.array_equal(a.z, obs.z)
    np.testing.assert_array_equal(a.x[:, 0], 2 * a.z)


@pytest.mark.parametrize("body,match", [("", "header"), ("z,x1\n1,2,3\n", "columns"),
                                        ("z,x1\n1,abc\n", "non-numeric")])
def test_csv_errors(tmp_path, body, match):
    path = tmp_path / "bad.csv"
    path.write_text(body)
    with pytest.raises(ConfigurationError, match=match):
        s = CSVStream(path)
        s.read(10)


def test_csv_missing_file_and_width(tmp_path):
    with pytest.raises(ConfigurationError):
        CSVStream(tmp_path / "nope.csv")
    path = tmp_path / "d.csv"
    path.write_text("z,x1,x2\n1,2,3\n")
    with pytest.raises(ConfigurationError, match="covariate"):
        CSVStream(path, x_dim=3)

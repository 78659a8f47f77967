"""Ready-made experiments: model, data stream, truth and tunables."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .config import AlgoConfig
from .data import (NL1_THETA, GeneratorStream, gen_gmm_demo, gen_linear, gen_mixture, gen_nl1,
                   gen_nl2, linear_sigma_x, linear_theta_star, mixture_theta_star)
from .errors import ConfigurationError
from .models import MixtureDemo, MixtureLogistic, Model, QuantileRegression


@dataclass
class Experiment:
    name: str
    model: Model
    config: AlgoConfig
    truth: np.ndarray | None
    horizon: int
    make_stream: Callable[[int], GeneratorStream]
    info: dict = field(default_factory=dict)


def _seq(seed: int, tag: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed), int(tag)])


def _gmm_demo(seed, params, overrides):
    model = MixtureDemo()
    theta = float(params.get("theta", 0.0))
    cfg = dict(N=5, M=2, t1=10, mu0=[-8.0], init_var=0.5, N_aux=20, seed=seed)
    cfg.update(overrides)
    return Experiment("gmm-demo", model, AlgoConfig(**cfg), np.array([theta]),
                      int(params.get("horizon", 400_000)),
                      lambda s: GeneratorStream(lambda r, n: gen_gmm_demo(r, n, theta, model), _seq(s, 1)))


def _nl1(seed, params, overrides):
    q = float(params.get("q", 0.5))
    model = QuantileRegression("nl1", q)
    cfg = dict(N=8**4, M=2, t1=5, mu0=list(NL1_THETA - 10.0), N_aux=1000, seed=seed)
    cfg.update(overrides)
    return Experiment("nl1", model, AlgoConfig(**cfg), NL1_THETA.copy(),
                      int(params.get("horizon", 1_000_000)),
                      lambda s: GeneratorStream(lambda r, n: gen_nl1(r, n), _seq(s, 1)))


def _nl2(seed, params, overrides):
    d = int(params.get("d", 7))
    q = float(params.get("q", 0.5))
    model = QuantileRegression("nl2", q, d)
    truth = np.ones(d)
    N = 4**d if d <= 8 else 30_000
    cfg = dict(N=N, M=2, t1=5, mu0=list(truth - 10.0), N_aux=20_000, seed=seed)
    cfg.update(overrides)
    return Experiment("nl2", model, AlgoConfig(**cfg), truth, int(params.get("horizon", 3_000_000)),
                      lambda s: GeneratorStream(lambda r, n: gen_nl2(r, n, d), _seq(s, 1)))


def _linear(seed, params, overrides):
    d = int(params.get("d", 20))
    q = float(params.get("q", 0.5))
    rho = float(params.get("rho", 0.0))
    data_seed = int(params.get("data_seed", seed))
    rng = np.random.default_rng(_seq(data_seed, 2))
    n1 = (d - 1) // 2
    Sigma_x = linear_sigma_x(rng, rho, sizes=(n1, d - 1 - n1))
    truth = linear_theta_star(rng, d)
    model = QuantileRegression("linear", q, d)
    cfg = dict(N=35_000, M=2, t1=5, mu0=list(truth - 10.0), N_aux=40_000, seed=seed)
    cfg.update(overrides)
    # truth is the median regression coefficient; it equals the q-quantile one only for q = 1/2
    return Experiment("linear", model, AlgoConfig(**cfg), truth if q == 0.5 else None,
                      int(params.get("horizon", 3_000_000)),
                      lambda s: GeneratorStream(lambda r, n: gen_linear(r, n, truth, Sigma_x), _seq(s, 1)),
                      info={"Sigma_x": Sigma_x, "theta_median": truth})


def _mixture(seed, params, overrides):
    x_dim = int(params.get("x_dim", 3))
    J = int(params.get("J", 2))
    data_seed = int(params.get("data_seed", seed))
    truth = mixture_theta_star(np.random.default_rng(_seq(data_seed, 3)), x_dim, J)
    model = MixtureLogistic(J, x_dim)
    d = model.dim
    cfg = dict(N=4**d if d <= 8 else 40_000, M=2, t1=100, mu0=[0.0], N_aux=10_000, seed=seed)
    cfg.update(overrides)
    return Experiment("mixture", model, AlgoConfig(**cfg), truth,
                      int(params.get("horizon", 7_000_000)),
                      lambda s: GeneratorStream(lambda r, n: gen_mixture(r, n, truth, J, x_dim), _seq(s, 1)))


PRESETS = {
    "gmm-demo": (_gmm_demo, "1-d 21-component mixture location model, N=5, start near -8"),
    "nl1": (_nl1, "quantile regression, logistic-type mean, d=4, N=8^4 (param q)"),
    "nl2": (_nl2, "quantile regression, exponential-decay mean (params d, q)"),
    "linear": (_linear, "linear quantile regression, d=20, N=35000, blockwise mode (params q, rho)"),
    "mixture": (_mixture, "mixture of J logistic regressions (params J, x_dim)"),
}


def build(name: str, seed: int = 0, params: dict | None = None,
          overrides: dict | None = None) -> Experiment:
    """Instantiate a preset; ``overrides`` replace AlgoConfig fields."""
    if name not in PRESETS:
        raise ConfigurationError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return PRESETS[name][0](int(seed), dict(params or {}), dict(overrides or {}))

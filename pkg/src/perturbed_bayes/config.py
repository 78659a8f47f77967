"""Tunables of the online estimator, with the default values used throughout."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

from .errors import ConfigurationError
from .estimators import GtWeights
from .schedule import ScheduleConfig

MODES = ("auto", "full", "meanfield")


@dataclass
class AlgoConfig:
    """All knobs of the estimator.

    ``M`` is the per-block number of exploratory auxiliary points (the
    auxiliary system holds N + M points in full-dimensional mode and
    N + (R+1) M points with R blocks). ``N_aux`` is the size of the
    candidate pool used for partition learning and for the best-likelihood
    exploratory point; 0 disables the pool. ``mu0``/``init_var`` define the
    Gaussian initial draws. ``partition`` optionally fixes the blocks
    (0-based coordinate lists) instead of learning them.
    """

    N: int = 16
    M: int = 2
    t1: int = 10
    kappa: float = 0.9
    eps0: float = 1.0
    varrho: float = 2.1
    beta: float = 0.01
    varepsilon: float = 0.1
    Delta: float = 0.95
    zeta1: float = 1.0
    zeta2: float = 0.5
    zeta3: float = 1.0
    zeta4: float = 0.5
    nu: float = 3.0
    L: float = 500.0
    N_aux: int = 0
    mu0: list = field(default_factory=lambda: [0.0])
    init_var: float = 1.0
    sigma_scale: float = 10.0
    mode: str = "auto"
    share_support: bool = False
    learn_partition: bool = True
    partition: list | None = None
    seed: int = 0
    workers: int = 1
    chunk: int = 512

    def __post_init__(self):
        if isinstance(self.mu0, (int, float)):
            self.mu0 = [float(self.mu0)]
        self.mu0 = [float(v) for v in self.mu0]
        if self.mode not in MODES:
            raise ConfigurationError(f"mode must be one of {MODES}")
        if self.N < 1 or self.M < 1 or self.chunk < 1:
            raise ConfigurationError("N, M and chunk must be positive")
        if self.N_aux < 0 or self.N_aux == 1:
            raise ConfigurationError("N_aux must be 0 or at least 2")
        if self.init_var <= 0.0:
            raise ConfigurationError("init_var must be positive")
        self.schedule(1)
        self.gt_weights()

    def schedule(self, d: int) -> ScheduleConfig:
        return ScheduleConfig(kappa=self.kappa, t1=self.t1, eps0=self.eps0, varrho=self.varrho,
                              beta=self.beta, varepsilon=self.varepsilon, d=d)

    def gt_weights(self) -> GtWeights:
        return GtWeights(Delta=self.Delta, zeta1=self.zeta1, zeta2=self.zeta2,
                         zeta3=self.zeta3, zeta4=self.zeta4, kappa=self.kappa)

    def mu0_for(self, d: int):
        if len(self.mu0) == 1:
            return self.mu0 * d
        if len(self.mu0) != d:
            raise ConfigurationError(f"mu0 has {len(self.mu0)} entries, model dimension is {d}")
        return list(self.mu0)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "AlgoConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigurationError(f"unknown configuration keys: {sorted(unknown)}")
        return cls(**data)

# ==============================================
# ADMM CONFIG AND STATE
# ==============================================

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from apps.core.exceptions import ConfigurationError
from apps.imaging.images import Image
from apps.neuralnet.model import INPUT_MODES
from apps.optimizers.trace import LbfgsConfig, TrainTrace


@dataclass(frozen=True)
class AdmmConfig:
    rho: float = 3e-3
    outer_iterations: int = 60
    em_subiterations: int = 2
    # 0 freezes the representation
    network_iterations: int = 20
    input_mode: str = 'prior'
    seed: int = 0
    lbfgs: LbfgsConfig = field(default_factory=LbfgsConfig)
    checkpoint_stride: int = 1

    def __post_init__(self):
        if not self.rho > 0:
            raise ConfigurationError(f"rho must be > 0, got {self.rho}", key='admm.rho')
        for name in ('outer_iterations', 'em_subiterations', 'checkpoint_stride'):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"must be >= 1, got {getattr(self, name)}", key=f'admm.{name}')
        if self.network_iterations < 0:
            raise ConfigurationError("must be >= 0", key='admm.network_iterations')
        if self.input_mode not in INPUT_MODES:
            raise ConfigurationError(f"must be one of {INPUT_MODES}, got {self.input_mode!r}", key='admm.input_mode')

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class AdmmHistory:
    """One entry per outer iteration."""
    likelihood: list = field(default_factory=list)
    residual: list = field(default_factory=list)
    network_loss: list = field(default_factory=list)
    network_iterations: list = field(default_factory=list)

    def __len__(self):
        return len(self.likelihood)

    def rows(self):
        return [
            (n, lik, res, loss, its)
            for n, (lik, res, loss, its) in enumerate(
                zip(self.likelihood, self.residual, self.network_loss, self.network_iterations), start=1)
        ]


@dataclass
class AdmmState:
    x: Image
    mu: Image
    f: Image
    representation: object
    n: int = 0
    history: AdmmHistory = field(default_factory=AdmmHistory)
    trace: Optional[TrainTrace] = None

    @property
    def reported(self) -> Image:
        return Image(self.f.grid, np.maximum(self.f.values, 0.0))

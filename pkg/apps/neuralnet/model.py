# ==============================================
# NETWORK MODEL AND PARAMETER VECTOR
# ==============================================
"""
Flat-parameter view of the network for the optimizers: a model binds
a config, a prepared input image and the parameter vector theta, and
evaluates f(theta | alpha) and the L2 fitting loss with its exact
reverse-mode gradient.
"""

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np
import torch
from torch.nn.utils import parameters_to_vector, vector_to_parameters

from apps.core.exceptions import ConfigurationError, GridMismatchError
from apps.imaging.images import Image
from .network import NetConfig, PersonalizedUNet, count_params

logger = logging.getLogger(__name__)

INPUT_MODES = ('prior', 'noise')


@dataclass(frozen=True)
class LayerSlot:
    name: str
    shape: tuple
    offset: int

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))


@dataclass(frozen=True, eq=False)
class ParamVector:
    """Flat float64 theta with a stable layer layout."""
    values: np.ndarray
    layout: tuple

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64, copy=True).reshape(-1)
        total = sum(slot.size for slot in self.layout)
        if values.size != total:
            raise GridMismatchError(f"parameter vector has {values.size} entries, layout needs {total}")
        values.setflags(write=False)
        object.__setattr__(self, 'values', values)
        object.__setattr__(self, 'layout', tuple(self.layout))

    def __len__(self):
        return self.values.size

    def layer(self, name: str) -> np.ndarray:
        for slot in self.layout:
            if slot.name == name:
                return self.values[slot.offset:slot.offset + slot.size].reshape(slot.shape)
        raise KeyError(name)

    def with_values(self, values) -> 'ParamVector':
        return ParamVector(values, self.layout)

    def manifest(self) -> list[dict]:
        return [{'name': s.name, 'shape': list(s.shape), 'offset': s.offset} for s in self.layout]


def layout_of(net: torch.nn.Module) -> tuple:
    slots, offset = [], 0
    for name, param in net.named_parameters():
        slots.append(LayerSlot(name, tuple(param.shape), offset))
        offset += param.numel()
    return tuple(slots)


def _vector_of(net: torch.nn.Module) -> np.ndarray:
    return parameters_to_vector(net.parameters()).detach().numpy().copy()


def init_params(config: NetConfig, seed: int = None) -> ParamVector:
    """
    He-normal weights for leaky units, var = 2 / (fan_in (1 + slope^2)),
    and zero biases, drawn from a dedicated generator.
    """
    seed = config.seed if seed is None else seed
    net = PersonalizedUNet(config)
    generator = torch.Generator().manual_seed(int(seed) % (2 ** 63))
    with torch.no_grad():
        for module in net.modules():
            if isinstance(module, torch.nn.Conv2d):
                torch.nn.init.kaiming_normal_(
                    module.weight, a=config.negative_slope, mode='fan_in',
                    nonlinearity='leaky_relu', generator=generator,
                )
                torch.nn.init.zeros_(module.bias)
    return ParamVector(_vector_of(net), layout_of(net))


def prepare_input(alpha: Image, mode: str = 'prior', seed: int = 0) -> Image:
    """
    Network input: the prior image min-max scaled to [0, 1] (a constant
    prior becomes zeros), or seeded uniform noise on the same grid.
    """
    if mode == 'prior':
        lo, hi = alpha.values.min(), alpha.values.max()
        if hi > lo:
            return alpha.with_values((alpha.values - lo) / (hi - lo))
        return Image.zeros(alpha.grid)
    if mode == 'noise':
        rng = np.random.default_rng(seed)
        return alpha.with_values(rng.uniform(0.0, 1.0, alpha.grid.shape))
    raise ConfigurationError(f"input mode must be one of {INPUT_MODES}, got {mode!r}", key='input_mode')


class NetworkModel:
    """
    Network representation bound to its input image.

    The optimizers see it through `theta`, `evaluate(theta)` and
    `objective(target)`, which is the surface the ADMM engine needs
    from any representation.
    """

    def __init__(self, config: NetConfig, alpha: Image, params: ParamVector = None):
        config.check_input_shape(alpha.grid.height, alpha.grid.width)
        self.config = config
        self.alpha = alpha
        self.grid = alpha.grid
        self.net = PersonalizedUNet(config)
        self.layout = layout_of(self.net)
        self._input = torch.from_numpy(np.ascontiguousarray(alpha.values)).reshape(
            1, 1, alpha.grid.height, alpha.grid.width
        )
        self.n_params = count_params(config)
        if self.n_params >= alpha.grid.n_pixels:
            logger.warning(
                f"Network has {self.n_params} parameters for {alpha.grid.n_pixels} pixels; "
                f"it can fit noise without constraint"
            )
        self.set_theta(params if params is not None else init_params(config))

    @property
    def params(self) -> ParamVector:
        return ParamVector(_vector_of(self.net), self.layout)

    @property
    def theta(self) -> np.ndarray:
        return _vector_of(self.net)

    def set_theta(self, theta):
        values = theta.values if isinstance(theta, ParamVector) else np.asarray(theta, dtype=np.float64)
        if values.size != self.n_params:
            raise GridMismatchError(f"theta has {values.size} entries, network has {self.n_params}")
        with torch.no_grad():
            vector_to_parameters(torch.from_numpy(values.astype(np.float64).copy()), self.net.parameters())

    def evaluate(self, theta=None, skip_scale: float = 1.0) -> np.ndarray:
        """Flat f(theta | alpha)."""
        if theta is not None:
            self.set_theta(theta)
        with torch.no_grad():
            out = self.net(self._input, skip_scale=skip_scale)
        return out.reshape(-1).numpy().copy()

    def loss_and_grad_flat(self, theta, target: np.ndarray) -> tuple[float, np.ndarray]:
        """sum_j (f_j - target_j)^2 and its gradient w.r.t. theta."""
        self.set_theta(theta)
        target_t = torch.from_numpy(np.ascontiguousarray(target, dtype=np.float64).reshape(-1))
        self.net.zero_grad(set_to_none=True)
        out = self.net(self._input).reshape(-1)
        diff = out - target_t
        loss = torch.dot(diff, diff)
        loss.backward()
        grad = torch.cat([p.grad.reshape(-1) for p in self.net.parameters()])
        return float(loss.item()), grad.numpy().copy()

    def objective(self, target: np.ndarray) -> Callable[[np.ndarray], tuple[float, np.ndarray]]:
        target = np.array(target, dtype=np.float64).reshape(-1)
        if target.size != self.grid.n_pixels:
            raise GridMismatchError(f"target has {target.size} pixels, network output has {self.grid.n_pixels}")
        return lambda theta: self.loss_and_grad_flat(theta, target)


def forward(model: NetworkModel) -> Image:
    return Image(model.grid, model.evaluate())


def loss_and_grad(model: NetworkModel, target: Image) -> tuple[float, ParamVector]:
    target.require_grid(model.grid, 'fitting target')
    loss, grad = model.loss_and_grad_flat(model.theta, target.flat)
    return loss, ParamVector(grad, model.layout)

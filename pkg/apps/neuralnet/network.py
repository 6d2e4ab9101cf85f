# ==============================================
# ENCODER-DECODER NETWORK
# ==============================================
"""
2D encoder-decoder used as the image representation f(theta | alpha).

    encoder  level 0: conv -> leaky -> conv -> leaky
             level l: stride-2 conv -> leaky -> conv -> leaky
    decoder  bilinear x2 -> conv -> leaky, + encoder feature, conv -> leaky
    head     1x1 conv, linear output

All convolutions use reflect padding; there are no normalization layers.
"""

from dataclasses import asdict, dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from apps.core.exceptions import ConfigurationError, GridMismatchError


@dataclass(frozen=True)
class NetConfig:
    depth: int = 3
    base_channels: int = 4
    kernel_size: int = 3
    negative_slope: float = 0.1
    seed: int = 0
    in_channels: int = 1

    def __post_init__(self):
        if self.depth < 2:
            raise ConfigurationError(f"depth must be >= 2, got {self.depth}", key='network.depth')
        if self.base_channels < 1:
            raise ConfigurationError("base_channels must be >= 1", key='network.base_channels')
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ConfigurationError("kernel_size must be odd", key='network.kernel_size')
        if not 0 <= self.negative_slope <= 1:
            raise ConfigurationError("negative_slope must be in [0, 1]", key='network.negative_slope')

    @property
    def channels(self) -> list[int]:
        return [self.base_channels * 2 ** level for level in range(self.depth)]

    @property
    def size_multiple(self) -> int:
        return 2 ** (self.depth - 1)

    def check_input_shape(self, height: int, width: int):
        m = self.size_multiple
        if height % m or width % m:
            raise GridMismatchError(
                f"network of depth {self.depth} needs dimensions divisible by {m}, got {width}x{height}"
            )
        if min(height, width) // m < 2:
            raise GridMismatchError(f"{width}x{height} is too small for depth {self.depth}")

    def to_dict(self) -> dict:
        return asdict(self)


def conv_layer_shapes(config: NetConfig) -> list[tuple[str, int, int, int]]:
    """(name, in_channels, out_channels, kernel) for every convolution, in parameter order."""
    ch = config.channels
    k = config.kernel_size
    shapes = [('encoder.0.conv_a', config.in_channels, ch[0], k), ('encoder.0.conv_b', ch[0], ch[0], k)]
    for level in range(1, config.depth):
        shapes.append((f'encoder.{level}.down', ch[level - 1], ch[level], k))
        shapes.append((f'encoder.{level}.conv_b', ch[level], ch[level], k))
    for index, level in enumerate(reversed(range(config.depth - 1))):
        shapes.append((f'decoder.{index}.conv_up', ch[level + 1], ch[level], k))
        shapes.append((f'decoder.{index}.conv_b', ch[level], ch[level], k))
    shapes.append(('head', ch[0], 1, 1))
    return shapes


def count_params(config: NetConfig) -> int:
    """Sum of k*k*c_in*c_out + c_out over all convolutions."""
    return sum(k * k * c_in * c_out + c_out for _, c_in, c_out, k in conv_layer_shapes(config))


class PersonalizedUNet(nn.Module):

    def __init__(self, config: NetConfig):
        super().__init__()
        self.config = config
        ch = config.channels

        def conv(c_in, c_out, stride=1):
            return nn.Conv2d(c_in, c_out, config.kernel_size, stride=stride,
                             padding=config.kernel_size // 2, padding_mode='reflect')

        self.encoder = nn.ModuleList([
            nn.ModuleDict({'conv_a': conv(config.in_channels, ch[0]), 'conv_b': conv(ch[0], ch[0])})
        ])
        for level in range(1, config.depth):
            self.encoder.append(nn.ModuleDict({
                'down': conv(ch[level - 1], ch[level], stride=2),
                'conv_b': conv(ch[level], ch[level]),
            }))
        self.decoder = nn.ModuleList([
            nn.ModuleDict({'conv_up': conv(ch[level + 1], ch[level]), 'conv_b': conv(ch[level], ch[level])})
            for level in reversed(range(config.depth - 1))
        ])
        self.head = nn.Conv2d(ch[0], 1, 1)
        self.to(torch.float64)

    def activation(self, x):
        # leaky_relu backward uses the slope at exactly 0
        return F.leaky_relu(x, self.config.negative_slope)

    def forward(self, x, skip_scale: float = 1.0):
        """`skip_scale` weights the encoder features added in the decoder (0 disables skips)."""
        features = []
        h = x
        for level, block in enumerate(self.encoder):
            h = self.activation(block['conv_a'](h) if level == 0 else block['down'](h))
            h = self.activation(block['conv_b'](h))
            features.append(h)
        features.pop()
        for block in self.decoder:
            h = F.interpolate(h, scale_factor=2, mode='bilinear', align_corners=False)
            h = self.activation(block['conv_up'](h))
            h = h + skip_scale * features.pop()
            h = self.activation(block['conv_b'](h))
        return self.head(h)


def bilinear_upsample(features):
    """
    2x bilinear upsampling, align_corners=False: output index o samples
    input coordinate (o + 0.5) / 2 - 0.5, clamped to the edge.
    Accepts (H, W) or (C, H, W) numpy arrays or tensors.
    """
    is_numpy = isinstance(features, np.ndarray)
    tensor = torch.as_tensor(features, dtype=torch.float64)
    squeeze = 4 - tensor.dim()
    for _ in range(squeeze):
        tensor = tensor.unsqueeze(0)
    out = F.interpolate(tensor, scale_factor=2, mode='bilinear', align_corners=False)
    for _ in range(squeeze):
        out = out.squeeze(0)
    return out.numpy() if is_numpy else out

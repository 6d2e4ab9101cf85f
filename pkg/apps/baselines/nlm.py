# ==============================================
# GUIDED NON-LOCAL MEANS
# ==============================================
"""
Non-local means whose weights come from a guide image (the anatomical
prior) rather than from the noisy image itself:

    out_i = sum_j w_ij noisy_j / sum_j w_ij,   w_ij = exp(-||G_i - G_j||^2 / h^2)

over the in-bounds pixels j of a search window around i, with G the
reflect-padded guide patches.
"""

import logging
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from apps.core.exceptions import ConfigurationError
from apps.imaging.images import Image
from .patches import overlap, patch_features, window_offsets

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class NlmConfig:
    window: int = 5
    patch: int = 3
    # None: half the guide intensity range
    h: Optional[float] = None

    def __post_init__(self):
        for name in ('window', 'patch'):
            size = getattr(self, name)
            if size < 1 or size % 2 == 0:
                raise ConfigurationError(f"must be a positive odd size, got {size}", key=f'nlm.{name}')
        if self.h is not None and not self.h > 0:
            raise ConfigurationError(f"must be > 0, got {self.h}", key='nlm.h')

    def to_dict(self) -> dict:
        return asdict(self)

    def strength(self, guide: Image) -> float:
        if self.h is not None:
            return self.h
        spread = float(guide.values.max() - guide.values.min())
        return 0.5 * spread if spread > 0 else 1.0


def nlm_guided_filter(noisy: Image, guide: Image, config: NlmConfig = None) -> Image:
    config = config or NlmConfig()
    guide.require_grid(noisy.grid, 'guide image')
    height, width = noisy.grid.shape
    h = config.strength(guide)
    features = patch_features(guide.values, config.patch // 2)

    numerator = np.zeros((height, width))
    denominator = np.zeros((height, width))
    for dr, dc in window_offsets(config.window // 2):
        ri, ci, rj, cj = overlap(dr, dc, height, width)
        diff = features[ri, ci] - features[rj, cj]
        weights = np.exp(-np.einsum('...k,...k->...', diff, diff) / h ** 2)
        numerator[ri, ci] += weights * noisy.values[rj, cj]
        denominator[ri, ci] += weights
    logger.debug(f"Guided NLM: window {config.window}, patch {config.patch}, h {h:.4g}")
    return noisy.with_values(numerator / denominator)

# ==============================================
# DIRECT FITTING: DENOISING AND DEBLURRING
# ==============================================
"""
Restoration paths built on the same representation. Denoising fits the
network to the noisy image directly under an L2 loss (identity system,
Gaussian noise); deblurring runs the ADMM engine with a convolution as
the system operator.
"""

import logging
from dataclasses import replace

import numpy as np

from apps.imaging.images import Image
from apps.neuralnet.model import NetworkModel, init_params, prepare_input
from apps.neuralnet.network import NetConfig
from apps.optimizers.trace import LbfgsConfig
from apps.projection.blur import BlurOperator
from apps.projection.geometry import Sinogram
from .engine import admm_reconstruct, fit_representation
from .state import AdmmConfig

logger = logging.getLogger(__name__)


def denoise_direct(noisy: Image, alpha: Image, epochs: int = 700, seed: int = 0,
                   net_config: NetConfig = None, input_mode: str = 'prior',
                   lbfgs: LbfgsConfig = None) -> Image:
    """Minimize ||f(theta | alpha) - noisy||^2 for at most `epochs` L-BFGS iterations."""
    noisy.require_grid(alpha.grid, 'noisy image')
    net_config = replace(net_config or NetConfig(), seed=seed)
    model = NetworkModel(net_config, prepare_input(alpha, input_mode, seed=seed), init_params(net_config))
    trace = fit_representation(model, noisy.flat, lbfgs or LbfgsConfig(), epochs)
    logger.info(
        f"Direct fit stopped after {trace.n_iterations} iterations ({trace.status}), "
        f"loss {trace.initial_loss:.6g} -> {trace.final_loss:.6g}"
    )
    return Image(noisy.grid, model.evaluate())


def deblur_reconstruct(blurred: Image, psf, alpha: Image, config: AdmmConfig = None,
                       net_config: NetConfig = None, **kwargs) -> Image:
    """
    ADMM with A = zero-padded convolution by `psf`; the blurred image
    plays the role of the measured counts.
    """
    A = BlurOperator(blurred.grid, psf)
    y = Sinogram(None, np.maximum(blurred.flat, 0.0))
    image, _ = admm_reconstruct(y, A, alpha, config, net_config, **kwargs)
    return image

from .checkpoint import load_checkpoint, save_checkpoint
from .direct import deblur_reconstruct, denoise_direct
from .engine import admm_reconstruct, admm_step, build_network, rho_sweep
from .representations import PixelRepresentation
from .state import AdmmConfig, AdmmHistory, AdmmState

__all__ = [
    'AdmmConfig', 'AdmmState', 'AdmmHistory', 'PixelRepresentation', 'admm_reconstruct', 'admm_step',
    'build_network', 'rho_sweep', 'denoise_direct', 'deblur_reconstruct', 'save_checkpoint', 'load_checkpoint',
]

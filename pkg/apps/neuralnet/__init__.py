from .io import load_params, save_params
from .model import NetworkModel, ParamVector, forward, init_params, loss_and_grad, prepare_input
from .network import NetConfig, PersonalizedUNet, bilinear_upsample, count_params

__all__ = [
    'NetConfig', 'ParamVector', 'NetworkModel', 'PersonalizedUNet', 'init_params', 'forward',
    'loss_and_grad', 'bilinear_upsample', 'count_params', 'prepare_input', 'save_params', 'load_params',
]

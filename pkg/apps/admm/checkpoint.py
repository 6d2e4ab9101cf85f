# ==============================================
# ADMM CHECKPOINTS
# ==============================================
"""
Checkpoint layout inside a run directory:

    state.npz               x, mu, f, theta (float64) of the latest iteration
    state.json              outer index and the ADMM config
    history.csv             iteration, likelihood, residual, network_loss, network_iterations
    params.bin / .json      network parameters (network representations only)
    images/iter_NNNN.img    reported image every checkpoint_stride iterations

Resuming reloads state.npz and history.csv; theta-steps start a fresh
L-BFGS history each outer iteration, so a resumed run matches an
uninterrupted one.
"""

import json
import logging
from pathlib import Path

import numpy as np

from apps.core.exceptions import ConfigurationError
from apps.core.utils import atomic_write, read_csv, write_csv, write_json
from apps.imaging.images import Image, ImageGrid
from apps.imaging.io import save_image
from apps.neuralnet.io import load_net_config, save_params
from apps.neuralnet.model import NetworkModel
from .state import AdmmConfig, AdmmHistory, AdmmState

logger = logging.getLogger(__name__)

HISTORY_HEADER = ('iteration', 'likelihood', 'residual', 'network_loss', 'network_iterations')


def checkpoint_image_path(directory, n: int) -> Path:
    return Path(directory) / 'images' / f'iter_{n:04d}.img'


def save_checkpoint(state: AdmmState, directory, config: AdmmConfig):
    directory = Path(directory)
    with atomic_write(directory / 'state.npz', 'wb') as handle:
        np.savez(handle, x=state.x.flat, mu=state.mu.flat, f=state.f.flat,
                 theta=state.representation.theta)
    write_json(directory / 'state.json', {'n': state.n, 'config': config.to_dict()})
    write_csv(directory / 'history.csv', HISTORY_HEADER, state.history.rows())
    if isinstance(state.representation, NetworkModel):
        save_params(state.representation.params, directory / 'params.bin', state.representation.config)
    if state.n % config.checkpoint_stride == 0 or state.n == config.outer_iterations:
        save_image(state.reported, checkpoint_image_path(directory, state.n))
    logger.debug(f"Checkpoint written for ADMM iteration {state.n} in {directory}")


def load_history(path) -> AdmmHistory:
    history = AdmmHistory()
    for row in read_csv(path):
        history.likelihood.append(float(row['likelihood']))
        history.residual.append(float(row['residual']))
        history.network_loss.append(float(row['network_loss']))
        history.network_iterations.append(int(row['network_iterations']))
    return history


def load_checkpoint(directory, grid: ImageGrid, representation) -> AdmmState:
    """Restore the latest state into `representation`."""
    directory = Path(directory)
    try:
        with open(directory / 'state.json', encoding='utf-8') as handle:
            meta = json.load(handle)
        with np.load(directory / 'state.npz') as arrays:
            x, mu, f, theta = (arrays[k].copy() for k in ('x', 'mu', 'f', 'theta'))
    except FileNotFoundError as e:
        raise ConfigurationError(f"no ADMM checkpoint in {directory}: {e}", key='resume_from')
    if isinstance(representation, NetworkModel):
        saved = load_net_config(directory / 'params.bin')
        if saved != representation.config:
            raise ConfigurationError(
                f"checkpoint network {saved.to_dict()} differs from {representation.config.to_dict()}", key='network'
            )
    representation.set_theta(theta)
    history = load_history(directory / 'history.csv')
    if len(history) != meta['n']:
        raise ConfigurationError(
            f"history.csv has {len(history)} rows, checkpoint is at iteration {meta['n']}", key='resume_from'
        )
    return AdmmState(Image(grid, x), Image(grid, mu), Image(grid, f), representation, meta['n'], history)

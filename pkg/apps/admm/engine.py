# ==============================================
# ADMM RECONSTRUCTION ENGINE
# ==============================================
"""
Penalized-likelihood reconstruction with the image constrained to a
representation x = f(theta | alpha), solved by ADMM in three steps per
outer iteration:

    theta  <- argmin ||f(theta | alpha) - (x + mu)||^2        (L-BFGS, warm start)
    x      <- EM subiterations, each followed by the closed-form
              penalized update towards f(theta | alpha) - mu
    mu     <- mu + x - f(theta | alpha)

The reported image is f(theta | alpha) clamped at 0.
"""

import logging
from dataclasses import replace
from pathlib import Path
from typing import Callable

import numpy as np

from apps.core.exceptions import NonFiniteStateError
from apps.imaging.images import Image
from apps.neuralnet.model import NetworkModel, init_params, prepare_input
from apps.neuralnet.network import NetConfig
from apps.optimizers.lbfgs import lbfgs_minimize
from apps.optimizers.trace import LbfgsConfig
from apps.poisson.em import EmWorkspace, default_initial_image
from apps.projection.geometry import Sinogram
from apps.projection.operators import ImagingOperator
from .checkpoint import load_checkpoint, save_checkpoint
from .state import AdmmConfig, AdmmState

logger = logging.getLogger(__name__)


def build_network(alpha: Image, config: AdmmConfig, net_config: NetConfig = None) -> NetworkModel:
    """Network bound to the prepared prior (or seeded noise), parameters from init_params(seed)."""
    net_config = replace(net_config or NetConfig(), seed=config.seed)
    prepared = prepare_input(alpha, config.input_mode, seed=config.seed)
    return NetworkModel(net_config, prepared, init_params(net_config))


def fit_representation(representation, target: np.ndarray, config: LbfgsConfig, iterations: int):
    """theta-step: warm-started L-BFGS on ||f(theta) - target||^2."""
    theta, trace = lbfgs_minimize(
        representation.objective(target), representation.theta, replace(config, max_iterations=iterations),
    )
    representation.set_theta(theta)
    return trace


def _check_finite(n: int, **arrays):
    diagnostic = {
        name: {'nan': int(np.isnan(a).sum()), 'inf': int(np.isinf(a).sum())}
        for name, a in arrays.items() if not np.all(np.isfinite(a))
    }
    if diagnostic:
        raise NonFiniteStateError(f"ADMM state became non-finite at outer iteration {n}: {diagnostic}", diagnostic)


def initial_state(y: Sinogram, A: ImagingOperator, representation) -> AdmmState:
    x0 = default_initial_image(y, A)
    f0 = representation.evaluate()
    _check_finite(0, f=f0)
    return AdmmState(x0, Image.zeros(A.grid), Image(A.grid, f0), representation)


def admm_step(state: AdmmState, workspace: EmWorkspace, config: AdmmConfig) -> AdmmState:
    """One outer iteration, updating `state` in place."""
    n = state.n + 1
    grid = state.x.grid
    x, mu = state.x.flat.copy(), state.mu.flat.copy()
    representation = state.representation

    if config.network_iterations > 0:
        trace = fit_representation(representation, x + mu, config.lbfgs, config.network_iterations)
        if state.trace is None:
            state.trace = trace
        else:
            state.trace.extend(trace)
        network_loss, network_iterations = trace.final_loss, trace.n_iterations
    else:
        network_loss, network_iterations = float('nan'), 0
    f = representation.evaluate()
    _check_finite(n, f=f)

    target = f - mu
    for _ in range(config.em_subiterations):
        x = workspace.penalized_step(x, target, config.rho)
    mu = mu + x - f
    _check_finite(n, x=x, mu=mu)

    state.x, state.mu, state.f, state.n = Image(grid, x), Image(grid, mu), Image(grid, f), n
    history = state.history
    history.likelihood.append(workspace.likelihood(np.maximum(f, 0.0)))
    history.residual.append(float(np.linalg.norm(x - f)))
    history.network_loss.append(float(network_loss))
    history.network_iterations.append(network_iterations)
    return state


def admm_reconstruct(y: Sinogram, A: ImagingOperator, alpha: Image, config: AdmmConfig = None,
                     net_config: NetConfig = None, representation=None, resume_from=None,
                     checkpoint_dir=None,
                     on_iteration: Callable[[int, AdmmState], None] = None) -> tuple[Image, AdmmState]:
    """
    Run the outer loop up to `config.outer_iterations`.

    `representation` defaults to the network built from alpha.
    `resume_from` continues from a checkpoint directory written by an
    earlier run with the same config; `checkpoint_dir` receives the
    state after every outer iteration and the reported image every
    `checkpoint_stride` iterations.
    """
    config = config or AdmmConfig()
    alpha.require_grid(A.grid, 'prior image')
    if representation is None:
        representation = build_network(alpha, config, net_config)
    workspace = EmWorkspace(A, y)

    if resume_from is not None:
        state = load_checkpoint(resume_from, A.grid, representation)
        logger.info(f"Resuming ADMM from outer iteration {state.n} ({resume_from})")
    else:
        state = initial_state(y, A, representation)

    logger.info(
        f"ADMM: rho={config.rho:g}, {config.outer_iterations} outer iterations, "
        f"{config.em_subiterations} EM / {config.network_iterations} L-BFGS per iteration"
    )
    while state.n < config.outer_iterations:
        admm_step(state, workspace, config)
        logger.debug(
            f"ADMM iteration {state.n}: log-likelihood {state.history.likelihood[-1]:.6f}, "
            f"residual {state.history.residual[-1]:.4g}"
        )
        if checkpoint_dir is not None:
            save_checkpoint(state, checkpoint_dir, config)
        if on_iteration is not None:
            on_iteration(state.n, state)

    if state.history.likelihood:
        logger.info(f"ADMM finished at iteration {state.n}, log-likelihood {state.history.likelihood[-1]:.6f}")
    return state.reported, state


def rho_sweep(y: Sinogram, A: ImagingOperator, alpha: Image, rhos, config: AdmmConfig = None,
              net_config: NetConfig = None, checkpoint_root=None) -> dict:
    """Independent runs per rho from identical initial parameters; {rho: (image, state)}."""
    config = config or AdmmConfig()
    results = {}
    for rho in rhos:
        directory = Path(checkpoint_root) / f"rho_{rho:g}" if checkpoint_root is not None else None
        results[rho] = admm_reconstruct(y, A, alpha, replace(config, rho=float(rho)), net_config,
                                        checkpoint_dir=directory)
    return results

# ==============================================
# FIRST-ORDER OPTIMIZERS (ADAM, NAG)
# ==============================================
"""
Adam and Nesterov accelerated gradient on a flat float64 parameter
vector, driven through torch.optim so the update rules are the
standard library ones. Neither is monotone.
"""

import logging
import time

import numpy as np
import torch

from apps.core.exceptions import OptimizerError
from .trace import FirstOrderConfig, Objective, TrainTrace, evaluate_checked

logger = logging.getLogger(__name__)


def _run(method: str, make_optimizer, objective: Objective, x0, config: FirstOrderConfig):
    x = np.array(x0, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(x)):
        raise OptimizerError(f"{method} starting point is not finite", iteration=0)
    param = torch.nn.Parameter(torch.from_numpy(x.copy()))
    optimizer = make_optimizer([param])

    value, grad = evaluate_checked(objective, x, method)
    trace = TrainTrace(method, value, evaluations=1)
    for k in range(1, config.max_iterations + 1):
        started = time.perf_counter()
        param.grad = torch.from_numpy(grad)
        optimizer.step()
        value, grad = evaluate_checked(objective, param.detach().numpy().copy(), method, iteration=k)
        trace.evaluations += 1
        trace.record(value, np.linalg.norm(grad), time.perf_counter() - started)
        logger.debug(f"{method} iteration {k}: loss {value:.10g}")

    trace.stop('max_iterations')
    return param.detach().numpy().copy(), trace


def adam_minimize(objective: Objective, x0, config: FirstOrderConfig = None) -> tuple[np.ndarray, TrainTrace]:
    """Bias-corrected Adam with constant step size."""
    config = config or FirstOrderConfig()
    return _run(
        'adam',
        lambda params: torch.optim.Adam(params, lr=config.step_size, betas=tuple(config.betas),
                                        eps=config.eps, foreach=False),
        objective, x0, config,
    )


def nag_minimize(objective: Objective, x0, config: FirstOrderConfig = None) -> tuple[np.ndarray, TrainTrace]:
    """
    Nesterov momentum in the form v <- m v + g, x <- x - lr (g + m v).
    Momentum 0 is plain gradient descent.
    """
    config = config or FirstOrderConfig()
    nesterov = config.momentum > 0
    return _run(
        'nag',
        lambda params: torch.optim.SGD(params, lr=config.step_size, momentum=config.momentum,
                                       nesterov=nesterov, foreach=False),
        objective, x0, config,
    )

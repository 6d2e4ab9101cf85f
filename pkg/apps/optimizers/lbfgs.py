# ==============================================
# L-BFGS WITH STRONG-WOLFE LINE SEARCH
# ==============================================
"""
Limited-memory BFGS for the network fitting subproblem.

Search directions come from the two-loop recursion over the last
`memory` curvature pairs; step lengths from scipy's strong-Wolfe line
search (cubic/quadratic interpolation, initial step 1). Every accepted
step satisfies the sufficient-decrease condition, so the loss trace
never increases.
"""

import logging
import time
import warnings
from collections import deque

import numpy as np
from scipy.optimize import line_search

from apps.core.exceptions import LineSearchError, OptimizerError
from .trace import LbfgsConfig, Objective, TrainTrace

logger = logging.getLogger(__name__)

CURVATURE_TOLERANCE = 1e-10


class CachedObjective:
    """
    Splits objective(x) -> (f, g) into the separate f and fprime
    callables the line search wants, evaluating each point once.
    Non-finite values read as +inf so the search backtracks.
    """

    def __init__(self, objective: Objective):
        self.objective = objective
        self.evaluations = 0
        self._x = None
        self._value = None
        self._grad = None

    def evaluate(self, x: np.ndarray):
        if self._x is None or not np.array_equal(x, self._x):
            value, grad = self.objective(x)
            self.evaluations += 1
            value = float(value)
            grad = np.asarray(grad, dtype=np.float64).reshape(-1)
            if not np.isfinite(value) or not np.all(np.isfinite(grad)):
                value, grad = np.inf, np.zeros_like(x)
            self._x, self._value, self._grad = x.copy(), value, grad
        return self._value, self._grad

    def value(self, x):
        return self.evaluate(x)[0]

    def gradient(self, x):
        return self.evaluate(x)[1]


def two_loop_direction(grad: np.ndarray, pairs: deque) -> np.ndarray:
    """-H g, with H0 = gamma I and gamma = s'y / y'y of the newest pair."""
    q = grad.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * np.dot(s, q)
        q -= a * y
        alphas.append(a)
    if pairs:
        s, y, _ = pairs[-1]
        q *= np.dot(s, y) / np.dot(y, y)
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * np.dot(y, q)
        q += (a - b) * s
    return -q


def _search(cache: CachedObjective, x, direction, value, grad, config: LbfgsConfig):
    with warnings.catch_warnings():
        # LineSearchWarning is a RuntimeWarning; failures are reported by alpha=None
        warnings.simplefilter('ignore', RuntimeWarning)
        alpha, *_ = line_search(
            cache.value, cache.gradient, x, direction, gfk=grad, old_fval=value,
            c1=config.c1, c2=config.c2, maxiter=config.max_line_search,
        )
    return alpha


def lbfgs_minimize(objective: Objective, x0, config: LbfgsConfig = None) -> tuple[np.ndarray, TrainTrace]:
    """
    Minimize objective from x0. Stops when the largest gradient entry is
    at most `gradient_tolerance`, after `max_iterations`, or when neither
    the quasi-Newton direction nor a steepest-descent restart admits a
    Wolfe step. The last case sets status `line_search_failed` and logs
    a warning (raises LineSearchError with `strict`).
    """
    config = config or LbfgsConfig()
    x = np.array(x0, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(x)):
        raise OptimizerError("L-BFGS starting point is not finite", iteration=0)

    cache = CachedObjective(objective)
    value, grad = cache.evaluate(x)
    if not np.isfinite(value):
        raise OptimizerError("L-BFGS objective is not finite at the starting point", iteration=0)
    trace = TrainTrace('lbfgs', value)
    pairs = deque(maxlen=config.memory)

    if np.max(np.abs(grad), initial=0.0) <= config.gradient_tolerance:
        trace.stop('converged')
    for k in range(1, config.max_iterations + 1):
        if trace.status != 'running':
            break
        started = time.perf_counter()
        direction = two_loop_direction(grad, pairs)
        alpha = None
        if np.dot(direction, grad) < 0:
            alpha = _search(cache, x, direction, value, grad, config)
        if alpha is None:
            # restart from steepest descent with the history dropped
            if pairs:
                logger.debug(f"L-BFGS iteration {k}: line search failed, restarting along -g")
            pairs.clear()
            direction = -grad * min(1.0, 1.0 / np.linalg.norm(grad))
            alpha = _search(cache, x, direction, value, grad, config)
        if alpha is None:
            message = f"L-BFGS line search failed at iteration {k} (loss {value:.6g})"
            if config.strict:
                raise LineSearchError(message, iteration=k)
            logger.warning(message)
            trace.stop('line_search_failed')
            break

        x_new = x + alpha * direction
        value_new, grad_new = cache.evaluate(x_new)
        if not np.isfinite(value_new):
            raise OptimizerError(f"L-BFGS accepted a non-finite step at iteration {k}", iteration=k)
        s = x_new - x
        y = grad_new - grad
        sy = np.dot(s, y)
        if sy > CURVATURE_TOLERANCE * np.linalg.norm(s) * np.linalg.norm(y):
            pairs.append((s, y, 1.0 / sy))
        else:
            logger.debug(f"L-BFGS iteration {k}: skipped curvature pair (s'y = {sy:.3g})")

        x, value, grad = x_new, value_new, grad_new
        trace.record(value, np.linalg.norm(grad), time.perf_counter() - started)
        logger.debug(f"L-BFGS iteration {k}: loss {value:.10g}, step {alpha:.3g}")
        if np.max(np.abs(grad)) <= config.gradient_tolerance:
            trace.stop('converged')

    if trace.status == 'running':
        trace.stop('max_iterations')
    trace.evaluations = cache.evaluations
    logger.debug(f"L-BFGS stopped after {trace.n_iterations} iterations ({trace.status}), loss {trace.final_loss:.10g}")
    return x, trace

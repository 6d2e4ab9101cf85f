# ==============================================
# OPTIMIZER CONFIGS AND TRACES
# ==============================================
"""
Configuration dataclasses shared by the optimizers and the per-iteration
training trace they return.
"""

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from apps.core.exceptions import ConfigurationError, OptimizerError
from apps.core.utils import write_csv

# objective(x) -> (value, gradient)
Objective = Callable[[np.ndarray], tuple[float, np.ndarray]]

TRACE_STATUSES = ('running', 'converged', 'max_iterations', 'line_search_failed')


@dataclass(frozen=True)
class LbfgsConfig:
    memory: int = 10
    max_iterations: int = 20
    c1: float = 1e-4
    c2: float = 0.9
    gradient_tolerance: float = 1e-10
    # bracketing/zoom iterations allowed per line search
    max_line_search: int = 30
    # raise LineSearchError instead of stopping with status line_search_failed
    strict: bool = False

    def __post_init__(self):
        if not 0 < self.c1 < self.c2 < 1:
            raise ConfigurationError(f"need 0 < c1 < c2 < 1, got c1={self.c1}, c2={self.c2}", key='lbfgs.c1')
        if self.memory < 1:
            raise ConfigurationError(f"memory must be >= 1, got {self.memory}", key='lbfgs.memory')
        if self.max_iterations < 0:
            raise ConfigurationError("max_iterations must be >= 0", key='lbfgs.max_iterations')
        if self.gradient_tolerance < 0:
            raise ConfigurationError("gradient_tolerance must be >= 0", key='lbfgs.gradient_tolerance')


@dataclass(frozen=True)
class FirstOrderConfig:
    step_size: float = 1e-2
    max_iterations: int = 300
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    momentum: float = 0.9

    def __post_init__(self):
        if not self.step_size > 0:
            raise ConfigurationError(f"step size must be > 0, got {self.step_size}", key='first_order.step_size')
        if not 0 <= self.momentum < 1:
            raise ConfigurationError(f"momentum must be in [0, 1), got {self.momentum}", key='first_order.momentum')
        if not all(0 <= b < 1 for b in self.betas):
            raise ConfigurationError("Adam betas must lie in [0, 1)", key='first_order.betas')
        if self.max_iterations < 0:
            raise ConfigurationError("max_iterations must be >= 0", key='first_order.max_iterations')


@dataclass
class TrainTrace:
    """
    Per-iteration record of one optimizer run. Entry k describes the
    iterate after k + 1 updates; `initial_loss` is the value at x0.
    """
    method: str
    initial_loss: float
    losses: list = field(default_factory=list)
    grad_norms: list = field(default_factory=list)
    seconds: list = field(default_factory=list)
    status: str = 'running'
    evaluations: int = 0

    def __post_init__(self):
        self.stop(self.status)

    def stop(self, status: str):
        if status not in TRACE_STATUSES:
            raise OptimizerError(f"unknown trace status '{status}', expected one of {TRACE_STATUSES}")
        self.status = status

    def record(self, loss: float, grad_norm: float, seconds: float):
        if not np.isfinite(loss):
            raise OptimizerError(f"{self.method} produced a non-finite loss", iteration=len(self.losses) + 1)
        self.losses.append(float(loss))
        self.grad_norms.append(float(grad_norm))
        self.seconds.append(float(seconds))

    @property
    def n_iterations(self) -> int:
        return len(self.losses)

    @property
    def final_loss(self) -> float:
        return self.losses[-1] if self.losses else self.initial_loss

    def extend(self, other: 'TrainTrace'):
        """Append another run's iterations, e.g. successive ADMM network fits."""
        self.losses.extend(other.losses)
        self.grad_norms.extend(other.grad_norms)
        self.seconds.extend(other.seconds)
        self.evaluations += other.evaluations
        self.stop(other.status)


def evaluate_checked(objective: Objective, x: np.ndarray, method: str, iteration: int = 0):
    value, grad = objective(x)
    value = float(value)
    grad = np.asarray(grad, dtype=np.float64).reshape(-1)
    if not np.isfinite(value) or not np.all(np.isfinite(grad)):
        raise OptimizerError(f"{method}: objective is not finite at iteration {iteration}", iteration=iteration)
    return value, grad


def normalized_cost(trace: TrainTrace, phi_ref: float, phi_1: float) -> np.ndarray:
    """
    L_n = (phi_ref - phi_n) / (phi_ref - phi_1) over the trace losses:
    1 at the reference start value, 0 at the reference end value.
    """
    denominator = phi_ref - phi_1
    if denominator == 0 or not np.isfinite(denominator):
        raise ConfigurationError(f"normalized cost needs phi_ref != phi_1, got {phi_ref} and {phi_1}", key='phi_ref')
    return (phi_ref - np.asarray(trace.losses, dtype=np.float64)) / denominator


def write_trace_csv(trace: TrainTrace, path):
    """iteration, loss, grad_norm, seconds; iteration 0 is the starting point."""
    rows = [(0, trace.initial_loss, '', 0.0)]
    rows += [
        (k, loss, norm, sec)
        for k, (loss, norm, sec) in enumerate(zip(trace.losses, trace.grad_norms, trace.seconds), start=1)
    ]
    write_csv(path, ('iteration', 'loss', 'grad_norm', 'seconds'), rows)

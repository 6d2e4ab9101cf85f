# ==============================================
# POISSON LIKELIHOOD AND EM
# ==============================================
"""
Poisson log-likelihood (constant -log y! omitted), the ML-EM update
and its separable surrogate, and plain MLEM reconstruction.

Pixels with A.j = 0 are outside the field of view and stay at 0.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from apps.core.exceptions import ConfigurationError, ModelInfeasibleError
from apps.imaging.images import Image
from apps.projection.geometry import Sinogram
from apps.projection.operators import ImagingOperator
from .penalized import penalized_pixel_update

logger = logging.getLogger(__name__)

# Floor for expected counts in bins with y > 0
EM_EPSILON = 1e-12


def _require_nonnegative(x: Image, what: str = 'image'):
    if not x.is_nonnegative():
        raise ConfigurationError(f"{what} must be nonnegative", key=what)


def _likelihood_flat(counts: np.ndarray, mean: np.ndarray) -> float:
    positive = counts > 0
    if np.any(mean[positive] <= 0):
        return float('-inf')
    return float(np.sum(counts[positive] * np.log(mean[positive])) - np.sum(mean))


def log_likelihood(y: Sinogram, x: Image, A: ImagingOperator) -> float:
    """
    sum_i y_i log ybar_i - ybar_i with ybar = A x + s. Bins with y_i = 0
    contribute -ybar_i; a bin with ybar_i = 0 and y_i > 0 gives -inf.
    """
    _require_nonnegative(x, 'x')
    A.check_measurements(y.counts, 'sinogram')
    return _likelihood_flat(y.counts, A.project(x) + y.additive)


@dataclass
class EmWorkspace:
    """
    Per-problem EM state: the operator, data and cached A.j.
    `x` and `x_em` hold the latest iterate and EM intermediate.
    """
    A: ImagingOperator
    y: Sinogram
    epsilon: float = EM_EPSILON
    x: Optional[np.ndarray] = None
    x_em: Optional[np.ndarray] = None

    def __post_init__(self):
        self.A.check_measurements(self.y.counts, 'sinogram')
        self.column_sums = self.A.column_sums
        self.support = self.column_sums > 0
        row_sums = self.A.apply(np.ones(self.A.grid.n_pixels))
        row_empty = row_sums <= 0
        infeasible = (self.y.counts > 0) & row_empty & (self.y.additive <= 0)
        if np.any(infeasible):
            raise ModelInfeasibleError(
                f"{int(infeasible.sum())} bins record counts but have zero expected value "
                f"for every image (first at index {int(np.argmax(infeasible))})"
            )

    def mean(self, x: np.ndarray) -> np.ndarray:
        return self.A.apply(x) + self.y.additive

    def likelihood(self, x: np.ndarray) -> float:
        return _likelihood_flat(self.y.counts, self.mean(x))

    def em_step(self, x: np.ndarray) -> np.ndarray:
        """x_em,j = x_j / A.j * sum_i A_ij y_i / ybar_i on the support."""
        counts = self.y.counts
        mean = self.mean(x)
        ratio = np.zeros_like(counts)
        positive = counts > 0
        ratio[positive] = counts[positive] / np.maximum(mean[positive], self.epsilon)
        correction = self.A.adjoint(ratio)
        x_em = np.zeros_like(x)
        s = self.support
        x_em[s] = x[s] / self.column_sums[s] * correction[s]
        self.x, self.x_em = x, x_em
        return x_em

    def penalized_step(self, x: np.ndarray, target: np.ndarray, rho: float) -> np.ndarray:
        """One EM step followed by the closed-form penalized update."""
        x_em = self.em_step(x)
        out = np.zeros_like(x)
        s = self.support
        out[s] = penalized_pixel_update(x_em[s], self.column_sums[s], rho, target[s])
        return out


def em_update(y: Sinogram, A: ImagingOperator, x_n: Image) -> Image:
    _require_nonnegative(x_n, 'x_n')
    x_n.require_grid(A.grid)
    return Image(A.grid, EmWorkspace(A, y).em_step(x_n.flat.copy()))


def surrogate_value(x: Image, x_n: Image, y: Sinogram, A: ImagingOperator) -> float:
    """
    Separable EM surrogate sum_j A.j (x_em,j log x_j - x_j), expanded at
    x_n. Pixels outside the support contribute nothing.
    """
    x.require_grid(A.grid)
    workspace = EmWorkspace(A, y)
    x_em = workspace.em_step(x_n.flat.copy())
    a_dot = workspace.column_sums
    xv = x.flat
    active = workspace.support & (x_em > 0)
    if np.any(xv[active] <= 0):
        raise ConfigurationError("surrogate needs x > 0 where A.j > 0 and x_em > 0", key='x')
    value = np.sum(a_dot[active] * x_em[active] * np.log(xv[active]))
    return float(value - np.sum(a_dot[workspace.support] * xv[workspace.support]))


def default_initial_image(y: Sinogram, A: ImagingOperator) -> Image:
    """Uniform (sum y - sum s) / sum_j A.j on the support, 1.0 if that is not positive."""
    level = (y.counts.sum() - y.additive.sum()) / A.column_sums.sum()
    if not level > 0:
        logger.warning(f"Count excess over the additive term is {level:.4g}; starting EM at 1.0")
        level = 1.0
    return Image(A.grid, np.where(A.support, level, 0.0))


def mlem_reconstruct(y: Sinogram, A: ImagingOperator, n_iters: int, x0: Image = None,
                     on_iteration: Callable[[int, Image], None] = None) -> Image:
    """
    `n_iters` ML-EM updates from x0 (default_initial_image when omitted).
    `on_iteration(k, image)` is called after every update, k from 1.
    """
    if n_iters < 0:
        raise ConfigurationError(f"iteration count must be >= 0, got {n_iters}", key='mlem.iterations')
    if x0 is None:
        x0 = default_initial_image(y, A)
    x0.require_grid(A.grid)
    _require_nonnegative(x0, 'x0')
    if np.any(x0.flat[A.support] <= 0):
        raise ConfigurationError("x0 must be > 0 on every pixel seen by the scanner", key='x0')

    workspace = EmWorkspace(A, y)
    x = x0.flat.copy()
    for k in range(1, n_iters + 1):
        x = workspace.em_step(x)
        if on_iteration is not None:
            on_iteration(k, Image(A.grid, x))
        logger.debug(f"MLEM iteration {k}/{n_iters}")
    logger.info(f"MLEM finished {n_iters} iterations, log-likelihood {workspace.likelihood(x):.6f}")
    return Image(A.grid, x)

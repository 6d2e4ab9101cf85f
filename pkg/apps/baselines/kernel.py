# ==============================================
# KERNEL METHOD
# ==============================================
"""
Kernelized reconstruction x = K alpha. Rows of K hold radial-basis
weights between each pixel's prior patch and its k nearest patches
inside a spatial search window; EM then runs on the coefficients
alpha through the composite system A K.
"""

import logging
from dataclasses import asdict, dataclass
from typing import Callable, Optional

import numpy as np
from scipy import sparse

from apps.core.exceptions import ConfigurationError, GridMismatchError, ImageFormatError
from apps.core.utils import read_csv, write_csv
from apps.imaging.images import Image
from apps.poisson.em import mlem_reconstruct
from apps.projection.geometry import Sinogram
from apps.projection.operators import ImagingOperator
from .patches import overlap, patch_features, window_offsets

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class KernelConfig:
    patch_radius: int = 1
    search_radius: int = 4
    neighbors: int = 25
    # None: mean nonzero neighbour distance of the image
    sigma: Optional[float] = None
    normalize: bool = True

    def __post_init__(self):
        if self.neighbors < 1:
            raise ConfigurationError(f"must be >= 1, got {self.neighbors}", key='kernel.neighbors')
        if self.sigma is not None and not self.sigma > 0:
            raise ConfigurationError(f"must be > 0, got {self.sigma}", key='kernel.sigma')
        if self.patch_radius < 0 or self.search_radius < 0:
            raise ConfigurationError("radii must be >= 0", key='kernel.search_radius')
        if self.neighbors > (2 * self.search_radius + 1) ** 2:
            raise ConfigurationError(
                f"{self.neighbors} neighbours do not fit a {2 * self.search_radius + 1}^2 search window",
                key='kernel.neighbors',
            )

    def to_dict(self) -> dict:
        return asdict(self)


def _candidate_distances(prior: Image, config: KernelConfig):
    """
    Squared patch distances (N, W) and candidate indices (N, W), self in
    column 0 and the other window pixels in increasing pixel index.
    Out-of-bounds candidates have distance inf.
    """
    height, width = prior.grid.shape
    features = patch_features(prior.values, config.patch_radius)
    index = np.arange(height * width).reshape(height, width)
    offsets = [(0, 0)] + [o for o in window_offsets(config.search_radius) if o != (0, 0)]
    distances = np.full((height * width, len(offsets)), np.inf)
    candidates = np.zeros((height * width, len(offsets)), dtype=np.int64)
    for column, (dr, dc) in enumerate(offsets):
        ri, ci, rj, cj = overlap(dr, dc, height, width)
        rows = index[ri, ci].reshape(-1)
        diff = features[ri, ci] - features[rj, cj]
        distances[rows, column] = np.einsum('...k,...k->...', diff, diff).reshape(-1)
        candidates[rows, column] = index[rj, cj].reshape(-1)
    return distances, candidates


def build_kernel_matrix(prior: Image, config: KernelConfig = None) -> sparse.csr_matrix:
    """
    K_ij = exp(-||p_i - p_j||^2 / (2 sigma^2)) for the k nearest patches
    j (self first, ties by pixel index), rows normalised to sum 1.
    """
    config = config or KernelConfig()
    n = prior.grid.n_pixels
    if config.neighbors > n:
        raise ConfigurationError(f"{config.neighbors} neighbours exceed {n} pixels", key='kernel.neighbors')

    distances, candidates = _candidate_distances(prior, config)
    order = np.argsort(distances, axis=1, kind='stable')[:, :config.neighbors]
    chosen = np.take_along_axis(distances, order, axis=1)
    columns = np.take_along_axis(candidates, order, axis=1)
    valid = np.isfinite(chosen)

    sigma = config.sigma
    if sigma is None:
        nonzero = chosen[valid & (chosen > 0)]
        sigma = float(np.sqrt(nonzero).mean()) if nonzero.size else 1.0
    weights = np.exp(-chosen[valid] / (2.0 * sigma ** 2))
    rows = np.repeat(np.arange(n), config.neighbors).reshape(n, -1)[valid]
    K = sparse.csr_matrix((weights, (rows, columns[valid])), shape=(n, n))
    if config.normalize:
        K = sparse.diags(1.0 / np.asarray(K.sum(axis=1)).reshape(-1)) @ K
    K = K.tocsr()
    K.sort_indices()
    logger.info(f"Kernel matrix: {n} pixels, {config.neighbors} neighbours, sigma {sigma:.4g}, nnz {K.nnz}")
    return K


class KernelSystem(ImagingOperator):
    """Composite operator alpha -> A K alpha on the image grid."""

    def __init__(self, A: ImagingOperator, K: sparse.spmatrix):
        if K.shape != (A.grid.n_pixels, A.grid.n_pixels):
            raise GridMismatchError(f"kernel matrix {K.shape} does not match {A.grid.n_pixels} pixels")
        self.A = A
        self.K = sparse.csr_matrix(K)
        self._K_transpose = self.K.T.tocsr()
        self.geometry = getattr(A, 'geometry', None)
        super().__init__(A.grid, A.n_measurements)

    def apply(self, alpha: np.ndarray) -> np.ndarray:
        return self.A.apply(self.K @ alpha)

    def adjoint(self, r: np.ndarray) -> np.ndarray:
        return self._K_transpose @ self.A.adjoint(r)

    def image_of(self, alpha: Image) -> Image:
        return Image(self.grid, self.K @ alpha.flat)


def kernel_em_reconstruct(y: Sinogram, A: ImagingOperator, K: sparse.spmatrix, n_iters: int,
                          alpha0: Image = None,
                          on_iteration: Callable[[int, Image], None] = None) -> Image:
    """EM on the kernel coefficients; returns x = K alpha. Callbacks receive x."""
    system = KernelSystem(A, K)
    def report(k, alpha):
        if on_iteration is not None:
            on_iteration(k, system.image_of(alpha))

    alpha = mlem_reconstruct(y, system, n_iters, x0=alpha0, on_iteration=report)
    return system.image_of(alpha)


def save_kernel_matrix(K: sparse.spmatrix, path):
    """(row, col, weight) triplets, one per nonzero, row-major."""
    coo = sparse.csr_matrix(K).tocoo()
    rows = [(int(r), int(c), float(w)) for r, c, w in zip(coo.row, coo.col, coo.data)]
    write_csv(path, ('row', 'col', 'weight'), rows)


def load_kernel_matrix(path, n_pixels: int) -> sparse.csr_matrix:
    try:
        triplets = read_csv(path)
        rows = np.array([int(t['row']) for t in triplets], dtype=np.int64)
        cols = np.array([int(t['col']) for t in triplets], dtype=np.int64)
        weights = np.array([float(t['weight']) for t in triplets])
    except (KeyError, ValueError) as e:
        raise ImageFormatError(f"kernel matrix file {path} is malformed: {e}", path=str(path))
    if rows.size and (rows.max() >= n_pixels or cols.max() >= n_pixels):
        raise GridMismatchError(f"kernel matrix in {path} indexes beyond {n_pixels} pixels")
    return sparse.csr_matrix((weights, (rows, cols)), shape=(n_pixels, n_pixels))

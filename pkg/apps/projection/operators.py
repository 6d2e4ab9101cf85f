# ==============================================
# LINEAR IMAGING OPERATORS
# ==============================================
"""
System matrices and other linear operators from images to expected
measurements. Every operator exposes the same surface:

    grid, n_measurements, column_sums
    apply(x_flat) / adjoint(r)         raw float64 arrays
    project(Image) / backproject(r)    checked wrappers

so the EM, ADMM and kernel code accept any of them interchangeably.
"""

import logging

import numpy as np
from scipy import sparse

from apps.core.exceptions import ConfigurationError, GridMismatchError
from apps.imaging.images import Image, ImageGrid
from .geometry import ProjectionGeometry

logger = logging.getLogger(__name__)

# Segments shorter than this are rounding residue at pixel corners
MIN_SEGMENT_MM = 1e-12


class ImagingOperator:
    """
    Base class for linear operators A with A_ij >= 0.
    Subclasses implement apply() and adjoint() on flat arrays.
    """

    def __init__(self, grid: ImageGrid, n_measurements: int):
        self.grid = grid
        self.n_measurements = int(n_measurements)
        column_sums = self.adjoint(np.ones(self.n_measurements))
        column_sums.setflags(write=False)
        self.column_sums = column_sums

    def apply(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def adjoint(self, r: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @property
    def support(self) -> np.ndarray:
        """Flat mask of pixels seen by at least one measurement."""
        return self.column_sums > 0

    def project(self, x: Image) -> np.ndarray:
        x.require_grid(self.grid, 'projected image')
        return self.apply(x.flat)

    def backproject(self, r) -> Image:
        r = np.asarray(r, dtype=np.float64).reshape(-1)
        if r.size != self.n_measurements:
            raise GridMismatchError(
                f"backprojection input has {r.size} values, operator has {self.n_measurements} rows"
            )
        return Image(self.grid, self.adjoint(r))

    def check_measurements(self, values: np.ndarray, what: str = 'measurements'):
        if values.size != self.n_measurements:
            raise GridMismatchError(f"{what} has {values.size} values, operator has {self.n_measurements} rows")


class SystemMatrix(ImagingOperator):
    """
    Explicit sparse tomographic system matrix (CSR, rows = LORs,
    entries = intersection lengths in mm).
    """

    def __init__(self, geometry: ProjectionGeometry, grid: ImageGrid, matrix: sparse.csr_matrix):
        if matrix.shape != (geometry.n_measurements, grid.n_pixels):
            raise GridMismatchError(
                f"matrix shape {matrix.shape} does not match "
                f"({geometry.n_measurements}, {grid.n_pixels})"
            )
        self.geometry = geometry
        self.matrix = matrix.tocsr()
        self._transpose = self.matrix.T.tocsr()
        super().__init__(grid, geometry.n_measurements)

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.matrix @ x

    def adjoint(self, r: np.ndarray) -> np.ndarray:
        return self._transpose @ r

    def to_dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def __repr__(self):
        return (f"SystemMatrix({self.geometry.n_angles}x{self.geometry.n_bins} LORs, "
                f"{self.grid.width}x{self.grid.height} pixels, nnz={self.matrix.nnz})")


def trace_ray(grid: ImageGrid, point: np.ndarray, direction: np.ndarray):
    """
    Siddon-style traversal of the line point + lam * direction through
    the pixel grid. Returns (flat pixel indices, lengths in mm).
    """
    half_w, half_h = grid.extent_mm
    lo = np.array([-half_w, -half_h])
    hi = np.array([half_w, half_h])
    lam_min, lam_max = -np.inf, np.inf
    for axis in range(2):
        if abs(direction[axis]) < 1e-12:
            if point[axis] < lo[axis] or point[axis] > hi[axis]:
                return np.empty(0, dtype=np.int64), np.empty(0)
            continue
        a = (lo[axis] - point[axis]) / direction[axis]
        b = (hi[axis] - point[axis]) / direction[axis]
        lam_min = max(lam_min, min(a, b))
        lam_max = min(lam_max, max(a, b))
    if not lam_max > lam_min:
        return np.empty(0, dtype=np.int64), np.empty(0)

    crossings = [np.array([lam_min, lam_max])]
    for axis, n_lines in ((0, grid.width), (1, grid.height)):
        if abs(direction[axis]) < 1e-12:
            continue
        lines = lo[axis] + np.arange(n_lines + 1) * grid.pixel_size
        lam = (lines - point[axis]) / direction[axis]
        crossings.append(lam[(lam > lam_min) & (lam < lam_max)])
    lam = np.unique(np.concatenate(crossings))

    lengths = np.diff(lam) * np.hypot(direction[0], direction[1])
    mid = 0.5 * (lam[:-1] + lam[1:])
    cols = np.floor((point[0] + mid * direction[0] - lo[0]) / grid.pixel_size).astype(np.int64)
    rows = np.floor((point[1] + mid * direction[1] - lo[1]) / grid.pixel_size).astype(np.int64)
    cols = np.clip(cols, 0, grid.width - 1)
    rows = np.clip(rows, 0, grid.height - 1)
    keep = lengths > MIN_SEGMENT_MM
    return rows[keep] * grid.width + cols[keep], lengths[keep]


def build_system_matrix(grid: ImageGrid, geometry: ProjectionGeometry) -> SystemMatrix:
    """
    Ray-trace every LOR of `geometry` through `grid`. Row i of the result
    holds the intersection lengths of ray i with each pixel.
    """
    indptr = [0]
    indices, data = [], []
    offsets = geometry.offsets
    for phi in geometry.angles:
        normal = np.array([np.cos(phi), np.sin(phi)])
        direction = np.array([-np.sin(phi), np.cos(phi)])
        for t in offsets:
            cols, lengths = trace_ray(grid, t * normal, direction)
            indices.append(cols)
            data.append(lengths)
            indptr.append(indptr[-1] + cols.size)
    matrix = sparse.csr_matrix(
        (np.concatenate(data), np.concatenate(indices), np.array(indptr)),
        shape=(geometry.n_measurements, grid.n_pixels),
    )
    # Corner segments can repeat a pixel within a row
    matrix.sum_duplicates()
    system = SystemMatrix(geometry, grid, matrix)
    logger.info(
        f"Built system matrix: {geometry.n_measurements} LORs x {grid.n_pixels} pixels, "
        f"nnz={matrix.nnz}, {int((~system.support).sum())} pixels outside the field of view"
    )
    return system


# ==============================================
# MODULE-LEVEL OPERATIONS
# ==============================================

def project(A: ImagingOperator, x: Image) -> np.ndarray:
    """out_i = sum_j A_ij x_j"""
    return A.project(x)


def backproject(A: ImagingOperator, r) -> Image:
    """out_j = sum_i A_ij r_i"""
    return A.backproject(r)


def forward_mean(A: ImagingOperator, x: Image, s) -> np.ndarray:
    """Expected counts A x + s."""
    s = np.asarray(s, dtype=np.float64).reshape(-1)
    A.check_measurements(s, 'additive term')
    if np.any(s < 0):
        raise ConfigurationError("additive term must be nonnegative", key='additive')
    return A.project(x) + s

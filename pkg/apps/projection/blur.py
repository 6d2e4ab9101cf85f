# ==============================================
# BLUR OPERATOR
# ==============================================
"""
Shift-invariant blurring as an imaging operator: measurements are the
blurred image itself (zero padding outside the grid), the adjoint is
correlation with the same PSF.
"""

import numpy as np
from scipy import ndimage

from apps.core.exceptions import ConfigurationError
from apps.imaging.images import ImageGrid
from .operators import ImagingOperator


def gaussian_psf(fwhm_px: float, radius: int = None) -> np.ndarray:
    """Normalised 2D Gaussian PSF with odd support."""
    if not fwhm_px > 0:
        raise ConfigurationError(f"psf fwhm must be > 0, got {fwhm_px}", key='psf')
    sigma = fwhm_px / 2.3548
    radius = radius if radius is not None else max(1, int(np.ceil(4 * sigma)))
    offsets = np.arange(-radius, radius + 1)
    profile = np.exp(-0.5 * (offsets / sigma) ** 2)
    psf = np.outer(profile, profile)
    return psf / psf.sum()


class BlurOperator(ImagingOperator):

    def __init__(self, grid: ImageGrid, psf):
        psf = np.array(psf, dtype=np.float64, copy=True)
        if psf.ndim != 2 or psf.shape[0] % 2 == 0 or psf.shape[1] % 2 == 0:
            raise ConfigurationError(f"psf must be 2D with odd sides, got shape {psf.shape}", key='psf')
        if np.any(psf < 0):
            raise ConfigurationError("psf must be nonnegative", key='psf')
        if abs(psf.sum() - 1.0) > 1e-9:
            raise ConfigurationError(f"psf must sum to 1, sums to {psf.sum():.12g}", key='psf')
        psf.setflags(write=False)
        self.psf = psf
        self.geometry = None
        super().__init__(grid, grid.n_pixels)

    def apply(self, x: np.ndarray) -> np.ndarray:
        img = np.asarray(x, dtype=np.float64).reshape(self.grid.shape)
        return ndimage.convolve(img, self.psf, mode='constant', cval=0.0).reshape(-1)

    def adjoint(self, r: np.ndarray) -> np.ndarray:
        img = np.asarray(r, dtype=np.float64).reshape(self.grid.shape)
        return ndimage.correlate(img, self.psf, mode='constant', cval=0.0).reshape(-1)

    def __repr__(self):
        return f"BlurOperator({self.grid.width}x{self.grid.height}, psf {self.psf.shape})"

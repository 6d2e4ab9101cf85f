# ==============================================
# GAUSSIAN POST-FILTER
# ==============================================

from scipy import ndimage

from apps.core.exceptions import ConfigurationError
from apps.imaging.images import Image

FWHM_TO_SIGMA = 1.0 / 2.3548


def gaussian_filter(img: Image, fwhm: float, unit: str = 'mm') -> Image:
    """
    Separable Gaussian smoothing with sigma = fwhm / 2.3548, kernel
    truncated at 4 sigma and normalised to sum 1, reflected borders.
    `unit` is 'mm' or 'px'.
    """
    if not fwhm > 0:
        raise ConfigurationError(f"fwhm must be > 0, got {fwhm}", key='fwhm')
    if unit not in ('mm', 'px'):
        raise ConfigurationError(f"unit must be 'mm' or 'px', got {unit!r}", key='unit')
    sigma_px = fwhm * FWHM_TO_SIGMA
    if unit == 'mm':
        sigma_px /= img.grid.pixel_size
    smoothed = ndimage.gaussian_filter(img.values, sigma=sigma_px, mode='reflect', truncate=4.0)
    return img.with_values(smoothed)

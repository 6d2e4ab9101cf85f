# ==============================================
# EM WITH GAUSSIAN POST-FILTER
# ==============================================

from apps.imaging.images import Image
from apps.poisson.em import mlem_reconstruct
from apps.poisson.filters import gaussian_filter
from apps.projection.geometry import Sinogram
from apps.projection.operators import ImagingOperator


def em_filter_reconstruct(y: Sinogram, A: ImagingOperator, n_iters: int, fwhm: float,
                          unit: str = 'mm', on_iteration=None) -> Image:
    """MLEM followed by Gaussian smoothing; callbacks receive the filtered iterates."""
    def report(k, image):
        if on_iteration is not None:
            on_iteration(k, gaussian_filter(image, fwhm, unit))

    return gaussian_filter(mlem_reconstruct(y, A, n_iters, on_iteration=report), fwhm, unit)

from .blur import BlurOperator, gaussian_psf
from .geometry import ProjectionGeometry, Sinogram
from .io import load_sinogram, save_sinogram
from .operators import (
    ImagingOperator, SystemMatrix, backproject, build_system_matrix, forward_mean, project,
)

__all__ = [
    'ProjectionGeometry', 'Sinogram', 'ImagingOperator', 'SystemMatrix', 'BlurOperator',
    'gaussian_psf', 'build_system_matrix', 'project', 'backproject', 'forward_mean',
    'save_sinogram', 'load_sinogram',
]

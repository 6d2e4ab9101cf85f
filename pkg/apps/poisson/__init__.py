from .em import (
    EmWorkspace, default_initial_image, em_update, log_likelihood, mlem_reconstruct, surrogate_value,
)
from .filters import gaussian_filter
from .penalized import penalized_pixel_update

__all__ = [
    'EmWorkspace', 'log_likelihood', 'em_update', 'surrogate_value', 'penalized_pixel_update',
    'default_initial_image', 'mlem_reconstruct', 'gaussian_filter',
]

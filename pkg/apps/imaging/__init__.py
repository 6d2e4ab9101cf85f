from .images import Image, ImageGrid, RoiMask
from .io import export_png, load_image, load_rois, percentile_window, save_image, save_rois
from .rois import circular_roi

__all__ = [
    'Image', 'ImageGrid', 'RoiMask',
    'load_image', 'save_image', 'export_png', 'percentile_window',
    'save_rois', 'load_rois', 'circular_roi',
]

# ==============================================
# ROI CONSTRUCTION
# ==============================================

from apps.core.exceptions import ConfigurationError
from .images import ImageGrid, RoiMask


def circular_roi(grid: ImageGrid, center: tuple[float, float], diameter: float,
                 label: str = '') -> RoiMask:
    """
    Pixels whose centres lie within diameter/2 of `center` (mm).
    """
    if not diameter > 0:
        raise ConfigurationError(f"ROI diameter must be > 0, got {diameter}", key='diameter_mm')
    xs, ys = grid.pixel_centers()
    cx, cy = float(center[0]), float(center[1])
    radius = diameter / 2.0
    mask = (xs - cx) ** 2 + (ys - cy) ** 2 <= radius ** 2
    if not mask.any():
        raise ConfigurationError(
            f"ROI '{label}' at ({cx}, {cy}) mm, diameter {diameter} mm covers no pixel", key='roi'
        )
    return RoiMask(grid, mask, label, (cx, cy), float(diameter))

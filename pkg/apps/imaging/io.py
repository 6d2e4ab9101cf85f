# ==============================================
# IMAGE FILE IO
# ==============================================
"""
Raw little-endian float32 images with a JSON sidecar, PNG previews
and ROI JSON files.

    foo.img   width*height '<f4' values, row-major
    foo.json  {"width": .., "height": .., "pixel_size_mm": ..}
"""

import json
import logging
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from apps.core.exceptions import ConfigurationError, ImageFormatError
from apps.core.utils import atomic_write, write_json
from .images import Image, ImageGrid, RoiMask
from .rois import circular_roi

logger = logging.getLogger(__name__)

RAW_DTYPE = np.dtype('<f4')


def sidecar_path(path) -> Path:
    return Path(path).with_suffix('.json')


def read_sidecar(path) -> dict:
    meta_path = sidecar_path(path)
    if not meta_path.exists():
        raise ImageFormatError(f"missing sidecar {meta_path}", path=str(path))
    try:
        with open(meta_path, encoding='utf-8') as handle:
            return json.load(handle)
    except json.JSONDecodeError as e:
        raise ImageFormatError(f"sidecar {meta_path} is not valid JSON: {e}", path=str(path))


def read_raw(path, expected: int) -> np.ndarray:
    """Read `expected` float32 values; error on any other length."""
    path = Path(path)
    if not path.exists():
        raise ImageFormatError(f"missing file {path}", path=str(path))
    data = np.fromfile(path, dtype=RAW_DTYPE)
    if data.size != expected:
        raise ImageFormatError(
            f"{path} holds {data.size} values, header requires {expected}", path=str(path)
        )
    if not np.all(np.isfinite(data)):
        raise ImageFormatError(f"{path} contains non-finite values", path=str(path))
    return data.astype(np.float64)


def to_raw(values: np.ndarray, path) -> np.ndarray:
    """Refuse values that overflow float32; read_raw would reject the file."""
    with np.errstate(over='ignore'):
        raw = np.ascontiguousarray(values, dtype=RAW_DTYPE)
    if not np.all(np.isfinite(raw)):
        raise ImageFormatError(f"values for {path} are not representable as float32", path=str(path))
    return raw


def write_raw(path, values: np.ndarray):
    raw = to_raw(values, path)
    with atomic_write(path, 'wb') as handle:
        handle.write(raw.tobytes())


def load_image(path) -> Image:
    """Load an image written by save_image (or any conforming producer)."""
    meta = read_sidecar(path)
    try:
        grid = ImageGrid.from_dict(meta)
    except KeyError as e:
        raise ImageFormatError(f"sidecar is missing field {e}", path=str(path))
    values = read_raw(path, grid.n_pixels)
    return Image(grid, values.reshape(grid.shape))


def save_image(img: Image, path):
    """
    Write the raw values and sidecar. Values are stored as float32, so
    load_image(save_image(img)) is bit-exact for float32-representable
    images.
    """
    write_raw(path, img.flat)
    write_json(sidecar_path(path), img.grid.to_dict())
    logger.debug(f"Saved image {img.grid.width}x{img.grid.height} to {path}")


def percentile_window(img: Image, lo_pct: float = 1.0, hi_pct: float = 99.0) -> tuple[float, float]:
    """Display window from percentiles; widened if the image is flat."""
    lo, hi = np.percentile(img.values, [lo_pct, hi_pct])
    lo, hi = float(lo), float(hi)
    if hi <= lo:
        hi = lo + 1.0
    return lo, hi


def export_png(img: Image, window: tuple[float, float], path):
    """8-bit grayscale: v -> round(255 * clamp((v - lo) / (hi - lo), 0, 1))."""
    lo, hi = window
    if not lo < hi:
        raise ConfigurationError(f"window requires lo < hi, got ({lo}, {hi})", key='window')
    scaled = np.clip((img.values - lo) / (hi - lo), 0.0, 1.0)
    # Half-up rounding; np.round would round half to even
    pixels = np.floor(255.0 * scaled + 0.5).astype(np.uint8)
    with atomic_write(path, 'wb') as handle:
        PILImage.fromarray(pixels).save(handle, format='PNG')


# ==============================================
# ROI FILES
# ==============================================

def save_rois(rois: list[RoiMask], path):
    """Only ROIs drawn as circles can be serialized."""
    entries = []
    for roi in rois:
        if roi.center_mm is None or roi.diameter_mm is None:
            raise ConfigurationError(f"ROI '{roi.label}' has no circle geometry", key='rois')
        entries.append({
            'center_mm': [float(roi.center_mm[0]), float(roi.center_mm[1])],
            'diameter_mm': float(roi.diameter_mm),
            'label': roi.label,
        })
    write_json(path, {'rois': entries})


def roi_from_dict(grid: ImageGrid, entry: dict) -> RoiMask:
    try:
        center = entry['center_mm']
        diameter = entry['diameter_mm']
    except KeyError as e:
        raise ConfigurationError(f"ROI entry is missing {e}", key='rois')
    return circular_roi(grid, (center[0], center[1]), diameter, label=entry.get('label', ''))


def load_rois(path, grid: ImageGrid) -> list[RoiMask]:
    with open(path, encoding='utf-8') as handle:
        data = json.load(handle)
    entries = data['rois'] if isinstance(data, dict) else data
    return [roi_from_dict(grid, entry) for entry in entries]

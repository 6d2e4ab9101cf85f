# ==============================================
# SINOGRAM FILE IO
# ==============================================
"""
Sinograms are stored next to images with the same sidecar convention:

    foo.sino   n '<f4' counts, then n '<f8' additive values when present
    foo.json   n_angles, n_bins, bin_size_mm, has_additive, activity_scale

Counts are integers and exact in float32; the additive term keeps full
precision so a reloaded sinogram gives the same mean model.
"""

import logging
from pathlib import Path

import numpy as np

from apps.core.exceptions import ImageFormatError
from apps.core.utils import atomic_write, write_json
from apps.imaging.io import RAW_DTYPE, read_sidecar, sidecar_path, to_raw
from .geometry import ProjectionGeometry, Sinogram

logger = logging.getLogger(__name__)

ADDITIVE_DTYPE = np.dtype('<f8')


def save_sinogram(sino: Sinogram, path):
    if sino.geometry is None:
        raise ImageFormatError("only tomographic sinograms can be saved", path=str(path))
    has_additive = sino.has_additive
    payload = to_raw(sino.counts, path).tobytes()
    if has_additive:
        payload += np.ascontiguousarray(sino.additive, dtype=ADDITIVE_DTYPE).tobytes()
    with atomic_write(path, 'wb') as handle:
        handle.write(payload)
    meta = sino.geometry.to_dict()
    meta['has_additive'] = has_additive
    meta['additive_dtype'] = ADDITIVE_DTYPE.str
    meta['activity_scale'] = sino.activity_scale
    write_json(sidecar_path(path), meta)
    logger.debug(f"Saved sinogram ({sino.n_measurements} bins) to {path}")


def load_sinogram(path) -> Sinogram:
    path = Path(path)
    meta = read_sidecar(path)
    try:
        geometry = ProjectionGeometry.from_dict(meta)
        has_additive = bool(meta['has_additive'])
    except KeyError as e:
        raise ImageFormatError(f"sidecar is missing field {e}", path=str(path))
    if not path.exists():
        raise ImageFormatError(f"missing file {path}", path=str(path))

    m = geometry.n_measurements
    data = path.read_bytes()
    split = m * RAW_DTYPE.itemsize
    expected = split + (m * ADDITIVE_DTYPE.itemsize if has_additive else 0)
    if len(data) != expected:
        raise ImageFormatError(f"{path} holds {len(data)} bytes, header requires {expected}", path=str(path))
    counts = np.frombuffer(data[:split], dtype=RAW_DTYPE).astype(np.float64)
    additive = np.frombuffer(data[split:], dtype=ADDITIVE_DTYPE).copy() if has_additive else None
    if not np.all(np.isfinite(counts)) or (additive is not None and not np.all(np.isfinite(additive))):
        raise ImageFormatError(f"{path} contains non-finite values", path=str(path))
    return Sinogram(geometry, counts, additive, meta.get('activity_scale', 1.0))

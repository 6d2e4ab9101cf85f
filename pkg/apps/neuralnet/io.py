# ==============================================
# PARAMETER FILES
# ==============================================
"""
theta is stored as raw little-endian float64 with a JSON manifest:

    {"n_params": .., "layers": [{"name", "shape", "offset"}, ..], "config": {..}}
"""

import numpy as np

from apps.core.exceptions import ImageFormatError
from apps.core.utils import atomic_write, write_json
from apps.imaging.io import read_sidecar, sidecar_path
from .model import LayerSlot, ParamVector
from .network import NetConfig


def save_params(params: ParamVector, path, config: NetConfig = None):
    with atomic_write(path, 'wb') as handle:
        handle.write(np.ascontiguousarray(params.values, dtype='<f8').tobytes())
    manifest = {'n_params': len(params), 'layers': params.manifest()}
    if config is not None:
        manifest['config'] = config.to_dict()
    write_json(sidecar_path(path), manifest)


def load_params(path) -> ParamVector:
    manifest = read_sidecar(path)
    try:
        layout = [LayerSlot(e['name'], tuple(e['shape']), e['offset']) for e in manifest['layers']]
    except KeyError as e:
        raise ImageFormatError(f"parameter manifest is missing {e}", path=str(path))
    values = np.fromfile(path, dtype='<f8')
    if values.size != manifest.get('n_params', values.size):
        raise ImageFormatError(f"{path} holds {values.size} parameters, manifest says {manifest['n_params']}",
                               path=str(path))
    return ParamVector(values, layout)


def load_net_config(path) -> NetConfig:
    """Config recorded alongside saved parameters."""
    manifest = read_sidecar(path)
    if 'config' not in manifest:
        raise ImageFormatError("parameter manifest has no network config", path=str(path))
    return NetConfig(**manifest['config'])

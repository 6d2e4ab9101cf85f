# ==============================================
# SIMULATE COMMAND
# ==============================================
"""
Phantom pair, system description, full-count sinogram and thinned
realizations. All randomness is derived from the root seed by name:
'phantom' (prior noise), 'counts' (Poisson draw) and 'thinning'
(realization k uses that seed + k).
"""

import logging

import numpy as np

from apps.core.exceptions import ConfigurationError
from apps.core.utils import derive_seed, write_json
from apps.imaging.images import Image, ImageGrid
from apps.imaging.io import load_image, save_image, save_rois
from apps.projection.geometry import ProjectionGeometry
from apps.projection.io import save_sinogram
from apps.simulation.counts import simulate_counts, thin_counts
from apps.simulation.phantom import default_background_rois, make_phantom, phantom_spec_from_dict
from .common import SimulationLayout, system_matrix, write_preview

logger = logging.getLogger(__name__)


def _imported_pair(block: dict, grid: ImageGrid) -> tuple[Image, Image]:
    activity = load_image(block['activity_image'])
    prior = load_image(block['prior_image'])
    activity.require_grid(grid, 'phantom.activity_image')
    prior.require_grid(grid, 'phantom.prior_image')
    if not activity.is_nonnegative():
        raise ConfigurationError("activity image has negative values", key='phantom.activity_image')
    return activity, prior


def _save_phantom(layout: SimulationLayout, activity: Image, prior: Image):
    save_image(activity, layout.activity)
    save_image(prior, layout.prior)
    write_preview(activity, layout.activity.with_suffix('.png'))
    write_preview(prior, layout.prior.with_suffix('.png'))


def cmd_simulate(config: dict, output_dir) -> dict:
    layout = SimulationLayout(output_dir)
    seed = config['seed']
    grid = ImageGrid.from_dict(config['grid'])
    geometry = ProjectionGeometry.from_dict(config['geometry'])
    counts = config['counts']
    block = dict(config['phantom'])

    A = system_matrix(grid, geometry)
    write_json(layout.system, {'grid': grid.to_dict(), 'geometry': geometry.to_dict()})

    tumor_free_activity = None
    if 'activity_image' in block:
        if counts['tumor_difference']:
            raise ConfigurationError(
                "the tumor-difference protocol needs the procedural phantom", key='counts.tumor_difference'
            )
        activity, prior = _imported_pair(block, grid)
        _save_phantom(layout, activity, prior)
        logger.info(f"Imported activity and prior images ({grid.width}x{grid.height})")
    else:
        block.setdefault('seed', derive_seed(seed, 'phantom'))
        spec = phantom_spec_from_dict(block, grid)
        pair = make_phantom(spec)
        activity = pair.activity
        _save_phantom(layout, activity, pair.prior)
        write_json(layout.root / 'phantom' / 'spec.json', block)
        for tissue, mask in pair.tissue_masks.items():
            save_image(Image(grid, mask.mask.astype(np.float64)), layout.tissue_mask(tissue))

        rois = list(pair.tumor_masks)
        if 'white' in pair.tissue_masks:
            rois += default_background_rois(
                pair,
                count=config['metrics']['background_roi_count'],
                diameter=config['metrics']['background_roi_diameter_mm'],
            )
        if rois:
            save_rois(rois, layout.rois)

        if counts['tumor_difference']:
            tumor_free_activity = make_phantom(spec.without_tumors()).activity
            save_image(tumor_free_activity, layout.activity_tumor_free)

    counts_seed = derive_seed(seed, 'counts')
    thinning_seed = derive_seed(seed, 'thinning')
    full = simulate_counts(A, activity, counts['s_fraction'], counts['total_counts'], counts_seed)
    save_sinogram(full, layout.full)
    realizations = thin_counts(full, counts['thin_ratio'], counts['n_realizations'], thinning_seed)
    for k, sino in enumerate(realizations):
        save_sinogram(sino, layout.realization(k))

    if tumor_free_activity is not None:
        companion = simulate_counts(A, tumor_free_activity, counts['s_fraction'], counts['total_counts'],
                                    counts_seed, activity_scale=full.activity_scale)
        save_sinogram(companion, layout.full_tumor_free)
        for k, sino in enumerate(thin_counts(companion, counts['thin_ratio'], counts['n_realizations'],
                                             thinning_seed)):
            save_sinogram(sino, layout.realization(k, tumor_free=True))

    logger.info(
        f"Simulated {full.counts.sum():.0f} counts and {len(realizations)} realizations "
        f"at ratio {counts['thin_ratio']}"
    )
    return {
        'total_counts': float(full.counts.sum()),
        'activity_scale': full.activity_scale,
        'realizations': len(realizations),
        'tumor_free': tumor_free_activity is not None,
    }

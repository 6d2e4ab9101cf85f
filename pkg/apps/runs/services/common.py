# ==============================================
# SHARED COMMAND HELPERS
# ==============================================
"""
Simulation directory layout, system-matrix caching, previews and task
dispatch used by several commands.
"""

import json
import logging
from functools import lru_cache
from pathlib import Path

from celery import group
from django.conf import settings

from apps.core.exceptions import ConfigurationError, ReconstructionError
from apps.imaging.images import Image, ImageGrid
from apps.imaging.io import export_png, percentile_window
from apps.projection.geometry import ProjectionGeometry
from apps.projection.operators import SystemMatrix, build_system_matrix

logger = logging.getLogger(__name__)

TUMOR_FREE_SUFFIX = '_tumor_free'


class SimulationLayout:
    """File layout of a `simulate` output directory."""

    def __init__(self, root):
        self.root = Path(root)

    @property
    def system(self) -> Path:
        return self.root / 'system.json'

    @property
    def activity(self) -> Path:
        return self.root / 'phantom' / 'activity.img'

    @property
    def activity_tumor_free(self) -> Path:
        return self.root / 'phantom' / f'activity{TUMOR_FREE_SUFFIX}.img'

    @property
    def prior(self) -> Path:
        return self.root / 'phantom' / 'prior.img'

    @property
    def rois(self) -> Path:
        return self.root / 'rois.json'

    @property
    def full(self) -> Path:
        return self.root / 'sinograms' / 'full.sino'

    @property
    def full_tumor_free(self) -> Path:
        return self.root / 'sinograms' / f'full{TUMOR_FREE_SUFFIX}.sino'

    def tissue_mask(self, tissue: str) -> Path:
        return self.root / 'phantom' / f'mask_{tissue}.img'

    def tissue_masks(self) -> dict[str, Path]:
        masks = sorted((self.root / 'phantom').glob('mask_*.img'))
        return {path.stem[len('mask_'):]: path for path in masks}

    def realization(self, k: int, tumor_free: bool = False) -> Path:
        suffix = TUMOR_FREE_SUFFIX if tumor_free else ''
        return self.root / 'realizations' / f'r_{k:02d}{suffix}.sino'

    def require(self):
        if not self.system.exists():
            raise ConfigurationError(f"{self.root} is not a simulate output (no system.json)", key='simulation')

    def load_system(self) -> tuple[ImageGrid, ProjectionGeometry]:
        self.require()
        with open(self.system, encoding='utf-8') as handle:
            data = json.load(handle)
        return ImageGrid.from_dict(data['grid']), ProjectionGeometry.from_dict(data['geometry'])

    def datasets(self, data: str, tumor_free: bool = False) -> list[tuple[str, Path]]:
        """
        (name, sinogram path) pairs in realization order; tumor-free
        companions follow their with-tumor data sets.
        """
        self.require()
        if data == 'full':
            sources = [('full', self.full, self.full_tumor_free)]
        else:
            paths = sorted(
                p for p in (self.root / 'realizations').glob('r_*.sino')
                if not p.stem.endswith(TUMOR_FREE_SUFFIX)
            )
            sources = [(p.stem, p, p.with_name(f'{p.stem}{TUMOR_FREE_SUFFIX}.sino')) for p in paths]
        if not sources or not sources[0][1].exists():
            raise ConfigurationError(f"no '{data}' data sets in {self.root}", key='data')

        datasets = []
        for name, path, companion in sources:
            datasets.append((name, path))
            if tumor_free:
                if not companion.exists():
                    raise ConfigurationError(
                        f"{companion.name} is missing; simulate with counts.tumor_difference", key='tumor_free'
                    )
                datasets.append((companion.stem, companion))
        return datasets


@lru_cache(maxsize=4)
def system_matrix(grid: ImageGrid, geometry: ProjectionGeometry) -> SystemMatrix:
    return build_system_matrix(grid, geometry)


def write_preview(image: Image, path):
    """PNG with a 1st-99th percentile window."""
    export_png(image, percentile_window(image), path)


def run_tasks(signatures: list) -> list[dict]:
    """
    Run task signatures in order when eager, as a group otherwise.
    A task reporting an error is re-raised as the matching exception.
    """
    if not signatures:
        return []
    if settings.CELERY_TASK_ALWAYS_EAGER:
        results = [signature.apply().get() for signature in signatures]
    else:
        logger.info(f"Dispatching {len(signatures)} tasks to the worker pool")
        results = group(signatures).apply_async().get()

    for result in results:
        if result.get('status') != 'success':
            message = result.get('message', 'task failed')
            if result.get('code') == ConfigurationError.default_code:
                raise ConfigurationError(message, code=result['code'])
            raise ReconstructionError(message, code=result.get('code'))
    return results

# ==============================================
# METRICS COMMAND
# ==============================================
"""
Metric-versus-noise curves over reconstruction checkpoints, and the
tumor-difference protocol.

Each `reconstructions` entry points at a `<reconstruct output>/<method>`
directory holding one sub-directory per realization. Curves are
evaluated at every iteration that is a multiple of the checkpoint
stride and present for all realizations.
"""

import json
import logging
import re
from pathlib import Path

import numpy as np

from apps.admm.checkpoint import checkpoint_image_path
from apps.core.exceptions import ConfigurationError
from apps.core.utils import write_csv
from apps.imaging.images import RoiMask
from apps.imaging.io import load_image, load_rois, read_sidecar, save_image
from apps.metrics.curves import curve_sweep, write_curve_csv
from apps.metrics.measures import RealizationSet, background_std, contrast_recovery, crc, tumor_difference
from .common import TUMOR_FREE_SUFFIX, SimulationLayout, write_preview

logger = logging.getLogger(__name__)

REALIZATION_DIR = re.compile(r'^r_\d+$')
CHECKPOINT_FILE = re.compile(r'^iter_(\d+)\.img$')


def realization_dirs(method_dir: Path, key: str) -> list[Path]:
    dirs = []
    if method_dir.is_dir():
        dirs = sorted(p for p in method_dir.iterdir() if p.is_dir() and REALIZATION_DIR.match(p.name))
    if not dirs:
        raise ConfigurationError(f"no realization reconstructions in {method_dir}", key=key)
    return dirs


def common_checkpoints(dirs: list[Path], stride: int) -> list[int]:
    available = None
    for directory in dirs:
        found = {
            int(match.group(1))
            for match in (CHECKPOINT_FILE.match(p.name) for p in (directory / 'images').glob('iter_*.img'))
            if match
        }
        available = found if available is None else available & found
    return sorted(n for n in (available or ()) if n > 0 and n % stride == 0)


class Evaluation:
    """ROIs and ground truth of one simulate output."""

    def __init__(self, config: dict):
        self.layout = SimulationLayout(config['simulation'])
        self.grid, _ = self.layout.load_system()
        self.activity = load_image(self.layout.activity)

        rois_path = Path(config['rois']) if config.get('rois') else self.layout.rois
        if not rois_path.exists():
            raise ConfigurationError(f"ROI definitions not found at {rois_path}", key='rois')
        rois = load_rois(rois_path, self.grid)
        self.tumor_rois = [roi for roi in rois if roi.label.startswith('tumor')]
        self.background_rois = [roi for roi in rois if roi.label.startswith('background')]
        if not self.background_rois:
            raise ConfigurationError(f"{rois_path} defines no background ROIs", key='rois')
        self.tissue_rois = {
            name: RoiMask(self.grid, load_image(path).values > 0.5, name)
            for name, path in self.layout.tissue_masks().items()
        }
        self.seed_set = self._seed_set()

    def _seed_set(self) -> str:
        resolved = self.layout.root / 'resolved_config.json'
        if not resolved.exists():
            return ''
        with open(resolved, encoding='utf-8') as handle:
            return str(json.load(handle).get('seed', ''))

    def activity_scale(self, name: str) -> float:
        sino = self.layout.root / 'realizations' / f'{name}.sino'
        if not sino.exists():
            raise ConfigurationError(f"{sino} is missing; metrics need the simulate output used", key='simulation')
        return float(read_sidecar(sino).get('activity_scale', 1.0))

    def realizations(self, dirs: list[Path], iteration: int) -> RealizationSet:
        images = [load_image(checkpoint_image_path(d, iteration)) for d in dirs]
        return RealizationSet(tuple(images), self.tumor_rois, self.tissue_rois, self.background_rois)

    def noise(self, realizations: RealizationSet) -> float:
        return background_std(realizations, self.background_rois)

    def gray_white_crc(self, realizations: RealizationSet) -> float:
        gray, white = self.tissue_rois['gray'], self.tissue_rois['white']
        return crc(realizations, gray, white, gray.mean(self.activity), white.mean(self.activity))

    def tumor_cr(self, realizations: RealizationSet, scale: float) -> float:
        return float(np.mean([
            contrast_recovery(realizations, roi, roi.mean(self.activity) * scale) for roi in self.tumor_rois
        ]))


def _tumor_only(evaluation: Evaluation, method: str, dirs: list[Path], output_dir: Path) -> list[tuple]:
    """Subtract tumor-free from with-tumor final images; CR against the inserted uptake."""
    layout = evaluation.layout
    if not layout.activity_tumor_free.exists():
        raise ConfigurationError("simulation has no tumor-free companion", key='tumor_difference')
    inserted = tumor_difference(evaluation.activity, load_image(layout.activity_tumor_free))

    differences = []
    for directory in dirs:
        companion = directory.with_name(f'{directory.name}{TUMOR_FREE_SUFFIX}')
        if not (companion / 'final.img').exists():
            raise ConfigurationError(f"{companion} is missing; reconstruct with tumor_free", key='tumor_difference')
        image = tumor_difference(load_image(directory / 'final.img'), load_image(companion / 'final.img'))
        save_image(image, output_dir / 'tumor_only' / method / f'{directory.name}.img')
        write_preview(image, output_dir / 'tumor_only' / method / f'{directory.name}.png')
        differences.append(image)

    realizations = RealizationSet(tuple(differences), evaluation.tumor_rois)
    scale = evaluation.activity_scale(dirs[0].name)
    return [
        (method, roi.label, contrast_recovery(realizations, roi, roi.mean(inserted) * scale))
        for roi in evaluation.tumor_rois
    ]


def cmd_metrics(config: dict, output_dir) -> dict:
    output_dir = Path(output_dir)
    evaluation = Evaluation(config)
    stride = config['metrics']['checkpoint_stride']
    with_crc = 'gray' in evaluation.tissue_rois and 'white' in evaluation.tissue_rois

    crc_points, cr_points, tumor_rows = [], [], []
    for index, entry in enumerate(config['reconstructions']):
        method = entry['method']
        dirs = realization_dirs(Path(entry['path']), key=f'reconstructions.{index}.path')
        checkpoints = common_checkpoints(dirs, stride)
        if not checkpoints:
            raise ConfigurationError(
                f"no checkpoints at multiples of {stride} shared by all realizations of {method}",
                key='metrics.checkpoint_stride',
            )
        scale = evaluation.activity_scale(dirs[0].name)

        def runner(n, dirs=dirs):
            return evaluation.realizations(dirs, n)

        if with_crc:
            crc_points += curve_sweep(runner, checkpoints, evaluation.gray_white_crc, evaluation.noise,
                                      method, evaluation.seed_set)
        if evaluation.tumor_rois:
            cr_points += curve_sweep(runner, checkpoints, lambda rs: evaluation.tumor_cr(rs, scale),
                                     evaluation.noise, method, evaluation.seed_set)
        if config['tumor_difference']:
            tumor_rows += _tumor_only(evaluation, method, dirs, output_dir)
        logger.info(f"Evaluated {method}: {len(dirs)} realizations, checkpoints {checkpoints}")

    if crc_points:
        write_curve_csv(crc_points, output_dir / 'crc_curve.csv')
    if cr_points:
        write_curve_csv(cr_points, output_dir / 'cr_curve.csv')
    if tumor_rows:
        write_csv(output_dir / 'tumor_only_cr.csv', ('method', 'tumor', 'cr'), tumor_rows)
    return {'crc_points': len(crc_points), 'cr_points': len(cr_points), 'tumor_rows': len(tumor_rows)}

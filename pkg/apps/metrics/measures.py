# ==============================================
# FIGURES OF MERIT
# ==============================================
"""
Region-based figures of merit over sets of i.i.d. reconstructions.

    CR    mean over realizations of (tumor ROI mean / true uptake)
    CRC   mean over realizations of (m_t / m_b - 1) / (t_t / t_b - 1)
    STD   per background ROI: sample SD over realizations of the ROI
          mean divided by its mean over realizations; averaged over ROIs
    CNR   (lesion mean - pooled muscle mean) / pooled muscle pixel SD

CRC and STD follow the ensemble definitions above; absolute values are
comparable only between runs of this toolkit.
"""

from dataclasses import dataclass, field

import numpy as np

from apps.core.exceptions import ConfigurationError, GridMismatchError
from apps.imaging.images import Image, RoiMask


@dataclass(frozen=True)
class RealizationSet:
    """Reconstructions of i.i.d. datasets sharing one grid and one ROI set."""
    images: tuple
    tumor_rois: tuple = ()
    tissue_rois: dict = field(default_factory=dict)
    background_rois: tuple = ()
    # ground-truth uptake per ROI label / tissue name, where known
    truth: dict = field(default_factory=dict)

    def __post_init__(self):
        images = tuple(self.images)
        if not images:
            raise ConfigurationError("realization set is empty", key='realizations')
        grid = images[0].grid
        for image in images[1:]:
            if image.grid != grid:
                raise GridMismatchError("all realizations must share one grid")
        object.__setattr__(self, 'images', images)
        object.__setattr__(self, 'tumor_rois', tuple(self.tumor_rois))
        object.__setattr__(self, 'background_rois', tuple(self.background_rois))

    @property
    def grid(self):
        return self.images[0].grid

    def __len__(self):
        return len(self.images)

    def roi_means(self, roi: RoiMask) -> np.ndarray:
        return np.array([roi.mean(image) for image in self.images])

    def with_images(self, images) -> 'RealizationSet':
        return RealizationSet(tuple(images), self.tumor_rois, self.tissue_rois, self.background_rois, self.truth)


def _require_realizations(realizations: RealizationSet, count: int):
    if len(realizations) < count:
        raise ConfigurationError(f"need at least {count} realizations, got {len(realizations)}", key='realizations')


def contrast_recovery(realizations: RealizationSet, tumor: RoiMask, l_true: float) -> float:
    if not l_true > 0:
        raise ConfigurationError(f"true uptake must be > 0, got {l_true}", key='l_true')
    return float(np.mean(realizations.roi_means(tumor) / l_true))


def background_std(realizations: RealizationSet, background_rois) -> float:
    _require_realizations(realizations, 2)
    background_rois = list(background_rois)
    if not background_rois:
        raise ConfigurationError("no background ROIs given", key='background_rois')
    relative = []
    for roi in background_rois:
        means = realizations.roi_means(roi)
        centre = means.mean()
        if centre == 0:
            raise ConfigurationError(f"background ROI '{roi.label}' has zero mean", key='background_rois')
        relative.append(means.std(ddof=1) / centre)
    return float(np.mean(relative))


def crc(realizations: RealizationSet, target: RoiMask, background: RoiMask,
        true_target: float, true_background: float) -> float:
    if true_background == 0 or true_target / true_background == 1:
        raise ConfigurationError("true target/background ratio must differ from 1", key='truth')
    target_means = realizations.roi_means(target)
    background_means = realizations.roi_means(background)
    if np.any(background_means == 0):
        raise ConfigurationError(f"background ROI '{background.label}' has zero mean", key='background')
    recovered = target_means / background_means - 1.0
    return float(np.mean(recovered / (true_target / true_background - 1.0)))


def cnr(img: Image, lesion: RoiMask, muscle_rois) -> float:
    muscle = np.concatenate([roi.values_of(img) for roi in muscle_rois]) if muscle_rois else np.array([])
    if muscle.size < 2:
        raise ConfigurationError("CNR needs at least two muscle pixels", key='muscle_rois')
    spread = muscle.std(ddof=1)
    if spread == 0:
        raise ConfigurationError("muscle region has zero variance", key='muscle_rois')
    return float((lesion.mean(img) - muscle.mean()) / spread)


def psnr(img: Image, reference: Image, data_range: float = None) -> float:
    """10 log10(range^2 / MSE); range defaults to the reference's max - min."""
    img.require_grid(reference.grid, 'compared image')
    if data_range is None:
        data_range = float(reference.values.max() - reference.values.min())
    if not data_range > 0:
        raise ConfigurationError("PSNR needs a positive data range", key='data_range')
    mse = float(np.mean((img.values - reference.values) ** 2))
    if mse == 0:
        return float('inf')
    return float(10.0 * np.log10(data_range ** 2 / mse))


def tumor_difference(with_tumor: Image, without_tumor: Image) -> Image:
    """Tumor-only image: reconstruction with inserted tumors minus the tumor-free one."""
    with_tumor.require_grid(without_tumor.grid, 'tumor-free image')
    return with_tumor.with_values(with_tumor.values - without_tumor.values)

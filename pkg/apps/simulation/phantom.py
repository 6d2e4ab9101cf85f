# ==============================================
# PROCEDURAL BRAIN PHANTOM
# ==============================================
"""
Ellipse-based brain phantom with a paired anatomical prior image.

Ellipses are painted in list order, so later (inner) ellipses
overwrite earlier ones. Tumor disks are painted last and only into
the activity image; the prior never shows them.
"""

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from apps.core.exceptions import ConfigurationError
from apps.imaging.images import Image, ImageGrid, RoiMask
from apps.imaging.rois import circular_roi

logger = logging.getLogger(__name__)

# Reference field of view (mm) the default ellipse layout is drawn for
REFERENCE_HALF_FOV_MM = 64.0


@dataclass(frozen=True)
class EllipseSpec:
    center: tuple[float, float]
    axes: tuple[float, float]
    tissue: str
    rotation: float = 0.0

    def contains(self, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        dx = xs - self.center[0]
        dy = ys - self.center[1]
        cos_r, sin_r = np.cos(self.rotation), np.sin(self.rotation)
        u = dx * cos_r + dy * sin_r
        v = -dx * sin_r + dy * cos_r
        return (u / self.axes[0]) ** 2 + (v / self.axes[1]) ** 2 <= 1.0


@dataclass(frozen=True)
class TumorSpec:
    center: tuple[float, float]
    diameter: float
    activity: float


@dataclass(frozen=True)
class PhantomSpec:
    """
    `prior_noise` is the SD of seeded Gaussian texture added to the
    prior image, as a fraction of its maximum intensity (0 disables it).
    """
    grid: ImageGrid
    ellipses: tuple[EllipseSpec, ...]
    activities: dict
    prior_intensities: dict = field(default_factory=dict)
    tumors: tuple[TumorSpec, ...] = ()
    seed: int = 0
    prior_noise: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, 'ellipses', tuple(self.ellipses))
        object.__setattr__(self, 'tumors', tuple(self.tumors))

    def without_tumors(self) -> 'PhantomSpec':
        return replace(self, tumors=())

    def tissue_labels(self) -> list[str]:
        labels = []
        for ellipse in self.ellipses:
            if ellipse.tissue not in labels:
                labels.append(ellipse.tissue)
        return labels

    def ellipse_for(self, tissue: str) -> EllipseSpec:
        """Outermost ellipse painted with `tissue`."""
        for ellipse in self.ellipses:
            if ellipse.tissue == tissue:
                return ellipse
        raise ConfigurationError(f"phantom has no '{tissue}' ellipse", key='phantom.ellipses')

    def validate(self):
        if not self.ellipses:
            raise ConfigurationError("phantom needs at least one ellipse", key='phantom.ellipses')
        for ellipse in self.ellipses:
            if ellipse.tissue not in self.activities:
                raise ConfigurationError(
                    f"no activity given for tissue '{ellipse.tissue}'", key='phantom.activities'
                )
            if ellipse.axes[0] <= 0 or ellipse.axes[1] <= 0:
                raise ConfigurationError(f"ellipse axes must be > 0, got {ellipse.axes}", key='phantom.ellipses')
        for label, activity in self.activities.items():
            if activity < 0:
                raise ConfigurationError(f"activity for '{label}' must be >= 0", key='phantom.activities')
        for tumor in self.tumors:
            if tumor.activity < 0 or tumor.diameter <= 0:
                raise ConfigurationError(
                    f"tumor at {tumor.center} needs activity >= 0 and diameter > 0", key='phantom.tumors'
                )
        if self.prior_noise < 0:
            raise ConfigurationError("prior_noise must be >= 0", key='phantom.prior_noise')


@dataclass(frozen=True, eq=False)
class PhantomPair:
    spec: PhantomSpec
    activity: Image
    prior: Image
    tumor_masks: list[RoiMask]
    tissue_masks: dict[str, RoiMask]

    @property
    def grid(self) -> ImageGrid:
        return self.activity.grid


def default_brain_spec(grid: ImageGrid, activities: dict = None, prior_intensities: dict = None,
                       tumor_activity: float = 8.0, tumor_diameter: float = 16.0,
                       include_tumors: bool = True, seed: int = 0, prior_noise: float = 0.0) -> PhantomSpec:
    """
    Skull-bounded gray matter ribbon around a white matter interior with
    a central ventricle, plus three tumor disks in white matter.

    The layout is drawn for a 128 mm field of view and scaled to `grid`;
    tumor diameters are not scaled.
    """
    half_fov = min(grid.extent_mm)
    scale = half_fov / REFERENCE_HALF_FOV_MM
    ellipses = (
        EllipseSpec((0.0, 0.0), (58.0 * scale, 48.0 * scale), 'gray'),
        EllipseSpec((0.0, 0.0), (46.0 * scale, 36.0 * scale), 'white'),
        EllipseSpec((0.0, 4.0 * scale), (7.0 * scale, 11.0 * scale), 'ventricle'),
    )
    tumors = ()
    if include_tumors:
        tumors = tuple(
            TumorSpec((cx * scale, cy * scale), tumor_diameter, tumor_activity)
            for cx, cy in ((-30.0, 10.0), (30.0, 10.0), (0.0, -26.0))
        )
    return PhantomSpec(
        grid=grid,
        ellipses=ellipses,
        activities=dict(activities or {'gray': 4.0, 'white': 1.0, 'ventricle': 0.5}),
        prior_intensities=dict(prior_intensities or {'gray': 0.6, 'white': 1.0, 'ventricle': 0.2}),
        tumors=tumors,
        seed=seed,
        prior_noise=prior_noise,
    )


def phantom_spec_from_dict(data: dict, grid: ImageGrid) -> PhantomSpec:
    """
    Build a spec from a validated `phantom` config block. Without an
    `ellipses` list the default brain layout is used with the block's
    activities and tumor settings.
    """
    include_tumors = data.get('include_tumors', True)
    if not data.get('ellipses'):
        return default_brain_spec(
            grid,
            activities=data.get('activities'),
            prior_intensities=data.get('prior_intensities'),
            tumor_activity=data.get('tumor_activity', 8.0),
            tumor_diameter=data.get('tumor_diameter_mm', 16.0),
            include_tumors=include_tumors,
            seed=data.get('seed', 0),
            prior_noise=data.get('prior_noise', 0.0),
        )
    ellipses = [
        EllipseSpec(tuple(e['center_mm']), tuple(e['axes_mm']), e['tissue'], e.get('rotation_rad', 0.0))
        for e in data['ellipses']
    ]
    tumors = []
    if include_tumors:
        tumors = [
            TumorSpec(tuple(t['center_mm']), t['diameter_mm'], t['activity'])
            for t in data.get('tumors', [])
        ]
    return PhantomSpec(
        grid=grid,
        ellipses=ellipses,
        activities=dict(data['activities']),
        prior_intensities=dict(data.get('prior_intensities') or {}),
        tumors=tumors,
        seed=data.get('seed', 0),
        prior_noise=data.get('prior_noise', 0.0),
    )


def make_phantom(spec: PhantomSpec) -> PhantomPair:
    spec.validate()
    grid = spec.grid
    xs, ys = grid.pixel_centers()

    labels = np.full(grid.shape, -1, dtype=np.int64)
    tissue_names = spec.tissue_labels()
    for ellipse in spec.ellipses:
        labels[ellipse.contains(xs, ys)] = tissue_names.index(ellipse.tissue)

    activity = np.zeros(grid.shape)
    prior = np.zeros(grid.shape)
    for index, name in enumerate(tissue_names):
        inside = labels == index
        activity[inside] = spec.activities[name]
        prior[inside] = spec.prior_intensities.get(name, spec.activities[name])

    tumor_masks = []
    tumor_union = np.zeros(grid.shape, dtype=bool)
    for k, tumor in enumerate(spec.tumors):
        roi = circular_roi(grid, tumor.center, tumor.diameter, label=f'tumor_{k}')
        activity[roi.mask] = tumor.activity
        tumor_union |= roi.mask
        tumor_masks.append(roi)

    if spec.prior_noise > 0:
        rng = np.random.default_rng(spec.seed)
        prior = prior + rng.normal(0.0, spec.prior_noise * prior.max(), size=grid.shape)

    tissue_masks = {}
    for index, name in enumerate(tissue_names):
        members = (labels == index) & ~tumor_union
        if members.any():
            tissue_masks[name] = RoiMask(grid, members, name)
        else:
            logger.warning(f"Tissue '{name}' is fully covered by later ellipses or tumors")

    logger.info(
        f"Phantom {grid.width}x{grid.height}: tissues {list(tissue_masks)}, {len(tumor_masks)} tumors"
    )
    return PhantomPair(spec, Image(grid, activity), Image(grid, prior), tumor_masks, tissue_masks)


def default_background_rois(pair: PhantomPair, count: int = 11, diameter: float = 8.0,
                            tissue: str = 'white') -> list[RoiMask]:
    """
    `count` circular ROIs lying entirely inside `tissue` (tumors
    excluded), spread evenly around a ring inside that tissue's ellipse.
    """
    ellipse = pair.spec.ellipse_for(tissue)
    allowed = pair.tissue_masks[tissue]
    grid = pair.grid
    candidates_per_ring = 8 * count
    for ring in (0.55, 0.45, 0.65, 0.35, 0.75):
        candidates = []
        for k in range(candidates_per_ring):
            theta = np.pi / 2 + 2 * np.pi * k / candidates_per_ring
            u = ring * ellipse.axes[0] * np.cos(theta)
            v = ring * ellipse.axes[1] * np.sin(theta)
            cos_r, sin_r = np.cos(ellipse.rotation), np.sin(ellipse.rotation)
            center = (ellipse.center[0] + u * cos_r - v * sin_r,
                      ellipse.center[1] + u * sin_r + v * cos_r)
            try:
                roi = circular_roi(grid, center, diameter)
                inside = roi.intersect(allowed)
            except ConfigurationError:
                # off the grid or outside the tissue entirely
                continue
            if inside.n_members == roi.n_members:
                candidates.append(roi)
        if len(candidates) >= count:
            picks = [candidates[(i * len(candidates)) // count] for i in range(count)]
            return [
                RoiMask(grid, roi.mask, f'background_{i}', roi.center_mm, roi.diameter_mm)
                for i, roi in enumerate(picks)
            ]
    raise ConfigurationError(
        f"could not place {count} background ROIs of {diameter} mm inside '{tissue}'", key='metrics.rois'
    )

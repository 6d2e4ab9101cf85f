# ==============================================
# COUNT SIMULATION AND THINNING
# ==============================================

import logging

import numpy as np

from apps.core.exceptions import ConfigurationError, ModelInfeasibleError
from apps.imaging.images import Image
from apps.projection.geometry import Sinogram
from apps.projection.operators import ImagingOperator

logger = logging.getLogger(__name__)


def simulate_counts(A: ImagingOperator, x_true: Image, s_fraction: float, total_counts: float,
                    seed: int, activity_scale: float = None) -> Sinogram:
    """
    Scale the noise-free projection so the expected total (signal plus a
    uniform additive term carrying `s_fraction` of it) equals
    `total_counts`, then draw independent Poisson counts per bin.

    The returned sinogram's `activity_scale` is the factor applied to
    x_true, so reconstructions compare against activity_scale * x_true.
    Passing `activity_scale` fixes the factor instead, which keeps a
    tumor-free companion on the same scale as its with-tumor data set.
    """
    if not total_counts > 0:
        raise ConfigurationError(f"total_counts must be > 0, got {total_counts}", key='counts.total_counts')
    if not 0 <= s_fraction < 1:
        raise ConfigurationError(f"s_fraction must be in [0, 1), got {s_fraction}", key='counts.s_fraction')

    projection = A.project(x_true)
    projected_total = float(projection.sum())
    if not projected_total > 0:
        raise ModelInfeasibleError("noise-free projection is identically zero")

    if activity_scale is None:
        scale = (1.0 - s_fraction) * total_counts / projected_total
    elif activity_scale > 0:
        scale = float(activity_scale)
    else:
        raise ConfigurationError(f"activity_scale must be > 0, got {activity_scale}", key='activity_scale')
    additive = np.full(A.n_measurements, s_fraction * total_counts / A.n_measurements)
    mean = scale * projection + additive

    rng = np.random.default_rng(seed)
    counts = rng.poisson(mean).astype(np.float64)
    logger.info(
        f"Simulated {counts.sum():.0f} counts (expected {mean.sum():.0f}), "
        f"activity scale {scale:.6g}, seed {seed}"
    )
    return Sinogram(getattr(A, 'geometry', None), counts, additive, scale)


def thin_counts(y: Sinogram, ratio: float, n_realizations: int, seed: int) -> list[Sinogram]:
    """
    Binomial thinning: realization k keeps each recorded count with
    probability `ratio`, drawing from a generator seeded with seed + k.
    """
    if not 0 < ratio <= 1:
        raise ConfigurationError(f"thinning ratio must be in (0, 1], got {ratio}", key='counts.thin_ratio')
    if n_realizations < 0:
        raise ConfigurationError("n_realizations must be >= 0", key='counts.n_realizations')
    if not y.is_integer_valued:
        raise ConfigurationError("thinning requires integer-valued counts", key='counts')

    trials = y.counts.astype(np.int64)
    realizations = []
    for k in range(n_realizations):
        rng = np.random.default_rng(seed + k)
        thinned = rng.binomial(trials, ratio).astype(np.float64)
        realizations.append(Sinogram(y.geometry, thinned, y.additive * ratio, y.activity_scale * ratio))
    logger.info(f"Thinned {n_realizations} realizations at ratio {ratio}")
    return realizations

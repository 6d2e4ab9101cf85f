# ==============================================
# PROJECTION GEOMETRY AND SINOGRAMS
# ==============================================
"""
Parallel-beam 2D geometry. Ray (a, b) is the line
{p : p . (cos phi_a, sin phi_a) = t_b} with phi_a = a * pi / n_angles
and t_b = (b + 0.5 - n_bins / 2) * bin_size. Measurement index is
i = a * n_bins + b.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from apps.core.exceptions import ConfigurationError, GeometryError, GridMismatchError


@dataclass(frozen=True)
class ProjectionGeometry:
    n_angles: int
    n_bins: int
    bin_size: float

    def __post_init__(self):
        if int(self.n_angles) < 1 or int(self.n_bins) < 1:
            raise GeometryError(
                f"geometry needs at least one angle and one bin, got "
                f"{self.n_angles} angles x {self.n_bins} bins"
            )
        if not self.bin_size > 0:
            raise GeometryError(f"bin_size must be > 0, got {self.bin_size}")
        object.__setattr__(self, 'n_angles', int(self.n_angles))
        object.__setattr__(self, 'n_bins', int(self.n_bins))
        object.__setattr__(self, 'bin_size', float(self.bin_size))

    @property
    def n_measurements(self) -> int:
        return self.n_angles * self.n_bins

    @property
    def angles(self) -> np.ndarray:
        """Uniform over [0, pi)."""
        return np.arange(self.n_angles) * np.pi / self.n_angles

    @property
    def offsets(self) -> np.ndarray:
        return (np.arange(self.n_bins) + 0.5 - self.n_bins / 2.0) * self.bin_size

    def to_dict(self) -> dict:
        return {'n_angles': self.n_angles, 'n_bins': self.n_bins, 'bin_size_mm': self.bin_size}

    @classmethod
    def from_dict(cls, data: dict) -> 'ProjectionGeometry':
        return cls(data['n_angles'], data['n_bins'], data['bin_size_mm'])


@dataclass(frozen=True, eq=False)
class Sinogram:
    """
    Measured counts y with the known additive expectation s.

    `geometry` is None for data measured through a non-tomographic
    operator (blurred or noisy images). `activity_scale` is the factor
    the simulator applied to the ground-truth activity to reach the
    requested count level.
    """
    geometry: Optional[ProjectionGeometry]
    counts: np.ndarray
    additive: np.ndarray = None
    activity_scale: float = 1.0

    def __post_init__(self):
        counts = np.array(self.counts, dtype=np.float64, copy=True).reshape(-1)
        if self.additive is None:
            additive = np.zeros_like(counts)
        else:
            additive = np.array(self.additive, dtype=np.float64, copy=True).reshape(-1)
        if self.geometry is not None and counts.size != self.geometry.n_measurements:
            raise GridMismatchError(
                f"sinogram has {counts.size} bins, geometry needs {self.geometry.n_measurements}"
            )
        if additive.size != counts.size:
            raise GridMismatchError(
                f"additive term has {additive.size} bins, counts have {counts.size}"
            )
        for name, arr in (('counts', counts), ('additive', additive)):
            if not np.all(np.isfinite(arr)):
                raise ConfigurationError(f"{name} must be finite", key=name)
            if np.any(arr < 0):
                raise ConfigurationError(f"{name} must be nonnegative", key=name)
            arr.setflags(write=False)
        object.__setattr__(self, 'counts', counts)
        object.__setattr__(self, 'additive', additive)
        object.__setattr__(self, 'activity_scale', float(self.activity_scale))

    @property
    def n_measurements(self) -> int:
        return self.counts.size

    @property
    def has_additive(self) -> bool:
        return bool(np.any(self.additive > 0))

    @property
    def is_integer_valued(self) -> bool:
        return bool(np.all(self.counts == np.floor(self.counts)))

    def with_counts(self, counts, additive=None) -> 'Sinogram':
        return Sinogram(
            self.geometry,
            counts,
            self.additive if additive is None else additive,
            self.activity_scale,
        )

# ==============================================
# IMAGE TYPES
# ==============================================
"""
Grid, image and ROI types shared by every other app.

Coordinates are image-centred millimetres: x grows with the column
index, y with the row index, and pixel (r, c) has its centre at
((c + 0.5 - W/2) * d, (r + 0.5 - H/2) * d).
"""

from dataclasses import dataclass, field

import numpy as np

from apps.core.exceptions import ConfigurationError, GridMismatchError


@dataclass(frozen=True)
class ImageGrid:
    """2D pixel grid with isotropic pixel size in mm."""
    width: int
    height: int
    pixel_size: float

    def __post_init__(self):
        if int(self.width) < 1 or int(self.height) < 1:
            raise ConfigurationError(
                f"grid must be at least 1x1, got {self.width}x{self.height}", key='grid'
            )
        if not self.pixel_size > 0:
            raise ConfigurationError(f"pixel_size must be > 0, got {self.pixel_size}", key='grid')
        object.__setattr__(self, 'width', int(self.width))
        object.__setattr__(self, 'height', int(self.height))
        object.__setattr__(self, 'pixel_size', float(self.pixel_size))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @property
    def n_pixels(self) -> int:
        return self.width * self.height

    @property
    def extent_mm(self) -> tuple[float, float]:
        """Half-widths of the field of view along x and y."""
        return (self.width * self.pixel_size / 2.0, self.height * self.pixel_size / 2.0)

    def pixel_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Return (x, y) centre coordinates, each of shape (height, width)."""
        xs = (np.arange(self.width) + 0.5 - self.width / 2.0) * self.pixel_size
        ys = (np.arange(self.height) + 0.5 - self.height / 2.0) * self.pixel_size
        return np.meshgrid(xs, ys)

    def to_dict(self) -> dict:
        return {'width': self.width, 'height': self.height, 'pixel_size_mm': self.pixel_size}

    @classmethod
    def from_dict(cls, data: dict) -> 'ImageGrid':
        return cls(data['width'], data['height'], data['pixel_size_mm'])


@dataclass(frozen=True, eq=False)
class Image:
    """
    Immutable 2D scalar field on a grid.

    `values` is stored as a read-only float64 array of shape
    (height, width); the flat row-major view is `image.flat`.
    """
    grid: ImageGrid
    values: np.ndarray

    def __post_init__(self):
        arr = np.array(self.values, dtype=np.float64, copy=True)
        if arr.size != self.grid.n_pixels:
            raise GridMismatchError(
                f"image has {arr.size} values, grid {self.grid.width}x{self.grid.height} "
                f"needs {self.grid.n_pixels}"
            )
        arr = arr.reshape(self.grid.shape)
        if not np.all(np.isfinite(arr)):
            raise ConfigurationError("image values must be finite", key='values')
        arr.setflags(write=False)
        object.__setattr__(self, 'values', arr)

    @classmethod
    def zeros(cls, grid: ImageGrid) -> 'Image':
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def full(cls, grid: ImageGrid, value: float) -> 'Image':
        return cls(grid, np.full(grid.shape, float(value)))

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def with_values(self, values) -> 'Image':
        """New image on the same grid."""
        return Image(self.grid, values)

    def is_nonnegative(self) -> bool:
        return bool(np.all(self.values >= 0))

    def require_grid(self, grid: ImageGrid, what: str = 'image'):
        if self.grid != grid:
            raise GridMismatchError(f"{what} grid {self.grid} does not match {grid}")

    def __repr__(self):
        return (f"Image({self.grid.width}x{self.grid.height}, "
                f"min={self.values.min():.4g}, max={self.values.max():.4g})")


@dataclass(frozen=True, eq=False)
class RoiMask:
    """Boolean region of interest on a grid."""
    grid: ImageGrid
    mask: np.ndarray
    label: str = ''
    # Geometry the mask was drawn from, kept for JSON serialization
    center_mm: tuple = field(default=None)
    diameter_mm: float = field(default=None)

    def __post_init__(self):
        arr = np.array(self.mask, dtype=bool, copy=True)
        if arr.size != self.grid.n_pixels:
            raise GridMismatchError(
                f"ROI '{self.label}' has {arr.size} flags, grid needs {self.grid.n_pixels}"
            )
        arr = arr.reshape(self.grid.shape)
        if not arr.any():
            raise ConfigurationError(f"ROI '{self.label}' has no member pixels", key='roi')
        arr.setflags(write=False)
        object.__setattr__(self, 'mask', arr)

    @property
    def n_members(self) -> int:
        return int(self.mask.sum())

    def mean(self, image: Image) -> float:
        image.require_grid(self.grid, f"ROI '{self.label}'")
        return float(image.values[self.mask].mean())

    def values_of(self, image: Image) -> np.ndarray:
        image.require_grid(self.grid, f"ROI '{self.label}'")
        return image.values[self.mask]

    def intersect(self, other: 'RoiMask', label: str = None) -> 'RoiMask':
        return RoiMask(self.grid, self.mask & other.mask, label or self.label,
                       self.center_mm, self.diameter_mm)

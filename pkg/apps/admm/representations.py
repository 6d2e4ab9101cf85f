# ==============================================
# IMAGE REPRESENTATIONS
# ==============================================
"""
Anything the ADMM engine can fit to x + mu. A representation exposes

    theta                 current parameter vector (copy)
    set_theta(theta)
    evaluate(theta=None)  flat image f(theta)
    objective(target)     theta -> (||f(theta) - target||^2, gradient)

NetworkModel implements this surface; PixelRepresentation is the
unconstrained f(theta)_j = theta_j used as a capacity reference.
"""

import numpy as np

from apps.core.exceptions import GridMismatchError
from apps.imaging.images import Image, ImageGrid


class PixelRepresentation:

    def __init__(self, grid: ImageGrid, theta=None):
        self.grid = grid
        self.n_params = grid.n_pixels
        self._theta = np.zeros(grid.n_pixels)
        if theta is not None:
            self.set_theta(theta)

    @classmethod
    def from_image(cls, image: Image) -> 'PixelRepresentation':
        return cls(image.grid, image.flat)

    @property
    def theta(self) -> np.ndarray:
        return self._theta.copy()

    def set_theta(self, theta):
        values = np.asarray(theta, dtype=np.float64).reshape(-1)
        if values.size != self.n_params:
            raise GridMismatchError(f"theta has {values.size} entries, grid has {self.n_params} pixels")
        self._theta = values.copy()

    def evaluate(self, theta=None) -> np.ndarray:
        if theta is not None:
            self.set_theta(theta)
        return self._theta.copy()

    def objective(self, target):
        target = np.array(target, dtype=np.float64).reshape(-1)
        if target.size != self.n_params:
            raise GridMismatchError(f"target has {target.size} pixels, representation has {self.n_params}")

        def loss_and_grad(theta):
            diff = np.asarray(theta, dtype=np.float64) - target
            return float(np.dot(diff, diff)), 2.0 * diff

        return loss_and_grad

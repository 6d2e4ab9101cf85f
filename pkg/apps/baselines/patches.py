# ==============================================
# PATCHES AND SEARCH WINDOWS
# ==============================================

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def patch_features(values: np.ndarray, radius: int) -> np.ndarray:
    """(H, W, (2r+1)^2) patches around every pixel, reflect-padded."""
    size = 2 * radius + 1
    padded = np.pad(values, radius, mode='reflect') if radius else values
    windows = sliding_window_view(padded, (size, size))
    return windows.reshape(values.shape[0], values.shape[1], size * size)


def window_offsets(radius: int) -> list[tuple[int, int]]:
    """Row-major offsets of a (2r+1) x (2r+1) window."""
    return [(dr, dc) for dr in range(-radius, radius + 1) for dc in range(-radius, radius + 1)]


def overlap(dr: int, dc: int, height: int, width: int):
    """
    Slices (rows_i, cols_i, rows_j, cols_j) pairing every pixel i with
    j = i + (dr, dc) where both lie inside the image.
    """
    rows_i = slice(max(0, -dr), min(height, height - dr))
    cols_i = slice(max(0, -dc), min(width, width - dc))
    rows_j = slice(max(0, dr), min(height, height + dr))
    cols_j = slice(max(0, dc), min(width, width + dc))
    return rows_i, cols_i, rows_j, cols_j

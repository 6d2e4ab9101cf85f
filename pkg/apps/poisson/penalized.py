# ==============================================
# PENALIZED PIXEL UPDATE
# ==============================================
"""
Closed-form maximizer over x >= 0 of the separable pixel objective

    A.j * (x_em * log x - x) - rho / 2 * (x - t)^2

which is the root of rho x^2 + (A.j - rho t) x - A.j x_em = 0:

    x = 1/2 (t - A.j/rho) + 1/2 sqrt((t - A.j/rho)^2 + 4 x_em A.j / rho)
"""

import numpy as np

from apps.core.exceptions import ConfigurationError


def penalized_pixel_update(x_em, a_dot, rho, target):
    """
    Vectorized over any broadcastable inputs. Evaluated in the
    cancellation-free form: for b = t - A.j/rho < 0 the root is
    written as 2c / (sqrt(b^2 + 4c) - b) with c = x_em A.j / rho.
    """
    x_em = np.asarray(x_em, dtype=np.float64)
    a_dot = np.asarray(a_dot, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if not np.all(np.asarray(rho) > 0):
        raise ConfigurationError(f"rho must be > 0, got {rho}", key='admm.rho')
    if np.any(a_dot <= 0):
        raise ConfigurationError("A.j must be > 0 for penalized updates", key='a_dot')
    if np.any(x_em < 0):
        raise ConfigurationError("EM image must be nonnegative", key='x_em')

    b = target - a_dot / rho
    c = x_em * a_dot / rho
    root = np.sqrt(b * b + 4.0 * c)
    with np.errstate(divide='ignore', invalid='ignore'):
        negative_branch = np.where(root - b > 0, 2.0 * c / (root - b), 0.0)
    result = np.where(b >= 0, 0.5 * (b + root), negative_branch)
    return result if result.ndim else float(result)

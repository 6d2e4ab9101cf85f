# ==============================================
# METRIC-VS-NOISE CURVES
# ==============================================

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from apps.core.exceptions import ConfigurationError
from apps.core.utils import write_csv
from .measures import RealizationSet

logger = logging.getLogger(__name__)

CURVE_HEADER = ('iteration', 'metric', 'std', 'method', 'seed_set')


@dataclass(frozen=True)
class CurvePoint:
    iteration: int
    metric: float
    std: float
    method: str = ''
    seed_set: str = ''

    def row(self):
        return self.iteration, float(self.metric), float(self.std), self.method, self.seed_set


def curve_sweep(runner: Callable[[int], RealizationSet], checkpoints: Sequence[int],
                metric: Callable[[RealizationSet], float], std: Callable[[RealizationSet], float],
                method: str = '', seed_set: str = '') -> list[CurvePoint]:
    """
    One point per checkpoint: `runner(iteration)` returns the realizations
    at that iteration, evaluated by `metric` and `std`.
    """
    checkpoints = list(checkpoints)
    if not checkpoints:
        raise ConfigurationError("no checkpoints to evaluate", key='metrics.checkpoints')
    points = []
    for iteration in checkpoints:
        realizations = runner(iteration)
        points.append(CurvePoint(int(iteration), metric(realizations), std(realizations), method, seed_set))
        logger.debug(f"{method or 'curve'} @ {iteration}: metric {points[-1].metric:.4f}, std {points[-1].std:.4f}")
    return points


def write_curve_csv(points: Sequence[CurvePoint], path):
    write_csv(path, CURVE_HEADER, [p.row() for p in points])


def std_overlap(*curves) -> tuple[float, float]:
    """STD interval covered by every curve."""
    lo = max(min(p.std for p in curve) for curve in curves)
    hi = min(max(p.std for p in curve) for curve in curves)
    if lo > hi:
        raise ConfigurationError("curves do not share a noise range", key='std')
    return lo, hi


def interpolate_at_std(points: Sequence[CurvePoint], std: float) -> float:
    """Metric at a given STD, linear along the curve ordered by STD."""
    ordered = sorted(points, key=lambda p: (p.std, p.iteration))
    stds = np.array([p.std for p in ordered])
    if not stds[0] <= std <= stds[-1]:
        raise ConfigurationError(f"std {std:.4g} outside the curve range [{stds[0]:.4g}, {stds[-1]:.4g}]", key='std')
    return float(np.interp(std, stds, [p.metric for p in ordered]))

from .curves import CurvePoint, curve_sweep, interpolate_at_std, std_overlap, write_curve_csv
from .measures import (
    RealizationSet, background_std, cnr, contrast_recovery, crc, psnr, tumor_difference,
)

__all__ = [
    'RealizationSet', 'CurvePoint', 'contrast_recovery', 'background_std', 'crc', 'cnr', 'psnr',
    'tumor_difference', 'curve_sweep', 'write_curve_csv', 'interpolate_at_std', 'std_overlap',
]

from .counts import simulate_counts, thin_counts
from .phantom import (
    EllipseSpec, PhantomPair, PhantomSpec, TumorSpec, default_background_rois, default_brain_spec,
    make_phantom, phantom_spec_from_dict,
)

__all__ = [
    'EllipseSpec', 'TumorSpec', 'PhantomSpec', 'PhantomPair', 'default_brain_spec',
    'phantom_spec_from_dict', 'make_phantom', 'default_background_rois',
    'simulate_counts', 'thin_counts',
]

from .kernel import (
    KernelConfig, KernelSystem, build_kernel_matrix, kernel_em_reconstruct, load_kernel_matrix, save_kernel_matrix,
)
from .nlm import NlmConfig, nlm_guided_filter
from .postfilter import em_filter_reconstruct

__all__ = [
    'KernelConfig', 'NlmConfig', 'KernelSystem', 'build_kernel_matrix', 'kernel_em_reconstruct',
    'nlm_guided_filter', 'em_filter_reconstruct', 'save_kernel_matrix', 'load_kernel_matrix',
]

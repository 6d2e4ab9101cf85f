# Command services
from .compare import cmd_compare_optimizers
from .context import RunContext
from .denoise import cmd_denoise
from .evaluate import cmd_metrics
from .reconstruct import cmd_reconstruct
from .simulate import cmd_simulate

COMMAND_SERVICES = {
    'simulate': cmd_simulate,
    'reconstruct': cmd_reconstruct,
    'denoise': cmd_denoise,
    'compare_optimizers': cmd_compare_optimizers,
    'metrics': cmd_metrics,
}

__all__ = [
    'RunContext', 'COMMAND_SERVICES',
    'cmd_simulate', 'cmd_reconstruct', 'cmd_denoise', 'cmd_compare_optimizers', 'cmd_metrics',
]

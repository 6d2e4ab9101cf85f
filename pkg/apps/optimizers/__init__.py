from .first_order import adam_minimize, nag_minimize
from .lbfgs import lbfgs_minimize
from .trace import FirstOrderConfig, LbfgsConfig, TrainTrace, normalized_cost, write_trace_csv

OPTIMIZERS = {
    'lbfgs': lbfgs_minimize,
    'adam': adam_minimize,
    'nag': nag_minimize,
}

__all__ = [
    'LbfgsConfig', 'FirstOrderConfig', 'TrainTrace', 'lbfgs_minimize', 'adam_minimize',
    'nag_minimize', 'normalized_cost', 'write_trace_csv', 'OPTIMIZERS',
]

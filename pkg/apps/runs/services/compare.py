# ==============================================
# COMPARE_OPTIMIZERS COMMAND
# ==============================================
"""
Adam, NAG and L-BFGS on the network fitting loss ||f(theta) - target||^2
from identical initial parameters. Costs are normalized against a longer
Adam run: L_n = (phi_ref - phi_n) / (phi_ref - phi_adam_1).
"""

import logging
from pathlib import Path

import matplotlib

matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from apps.core.utils import atomic_write, derive_seed, write_csv  # noqa: E402
from apps.imaging.io import load_image  # noqa: E402
from apps.neuralnet.model import NetworkModel, init_params, prepare_input  # noqa: E402
from apps.optimizers.first_order import adam_minimize, nag_minimize  # noqa: E402
from apps.optimizers.lbfgs import lbfgs_minimize  # noqa: E402
from apps.optimizers.trace import FirstOrderConfig, normalized_cost, write_trace_csv  # noqa: E402
from .reconstruct import lbfgs_config_of, net_config_of  # noqa: E402

logger = logging.getLogger(__name__)

METHODS = ('adam', 'nag', 'lbfgs')


def _padded(values: np.ndarray, length: int) -> np.ndarray:
    """Hold the last value when a run stopped early (converged)."""
    if values.size >= length:
        return values[:length]
    fill = values[-1] if values.size else 1.0
    return np.concatenate([values, np.full(length - values.size, fill)])


def plot_normalized_cost(columns: dict, path):
    figure, axis = plt.subplots(figsize=(6.0, 4.0))
    iterations = np.arange(1, len(next(iter(columns.values()))) + 1)
    for method, values in columns.items():
        axis.plot(iterations, values, label=method.upper() if method != 'lbfgs' else 'L-BFGS')
    axis.axhline(0.0, color='gray', linewidth=0.5)
    axis.set_xlabel('iteration')
    axis.set_ylabel('normalized cost')
    axis.legend()
    figure.tight_layout()
    with atomic_write(path, 'wb') as handle:
        figure.savefig(handle, format='png', dpi=100, metadata={'Software': None})
    plt.close(figure)


def cmd_compare_optimizers(config: dict, output_dir) -> dict:
    output_dir = Path(output_dir)
    block = config['compare']
    first_order = config['first_order']
    n_iters = block['iterations']

    target = load_image(config['target'])
    prior = load_image(config['prior'])
    target.require_grid(prior.grid, 'target image')

    seed = derive_seed(config['seed'], 'network')
    net_config = net_config_of(config['network'], seed)
    model = NetworkModel(net_config, prepare_input(prior, block['input_mode'], seed=seed), init_params(net_config))
    objective = model.objective(target.flat)
    theta0 = model.theta.copy()
    logger.info(f"Comparing optimizers on {model.n_params} parameters, {n_iters} iterations each")

    _, reference = adam_minimize(objective, theta0, FirstOrderConfig(
        step_size=first_order['adam_step_size'], max_iterations=block['reference_iterations']))
    _, adam = adam_minimize(objective, theta0, FirstOrderConfig(
        step_size=first_order['adam_step_size'], max_iterations=n_iters))
    _, nag = nag_minimize(objective, theta0, FirstOrderConfig(
        step_size=first_order['nag_step_size'], max_iterations=n_iters, momentum=first_order['nag_momentum']))
    _, lbfgs = lbfgs_minimize(objective, theta0, lbfgs_config_of(config['lbfgs'], max_iterations=n_iters))

    phi_ref, phi_1 = reference.final_loss, reference.losses[0]
    traces = {'adam': adam, 'nag': nag, 'lbfgs': lbfgs}
    columns = {method: _padded(normalized_cost(traces[method], phi_ref, phi_1), n_iters) for method in METHODS}

    rows = [(k + 1, *(float(columns[m][k]) for m in METHODS)) for k in range(n_iters)]
    write_csv(output_dir / 'normalized_cost.csv', ('iteration', *METHODS), rows)
    plot_normalized_cost(columns, output_dir / 'normalized_cost.png')
    for method, trace in (('adam_reference', reference), *traces.items()):
        write_trace_csv(trace, output_dir / 'logs' / f'trace_{method}.csv')

    final = {method: float(columns[method][-1]) for method in METHODS}
    logger.info(
        "Final normalized cost: " + ', '.join(f"{method} {value:.4g}" for method, value in final.items())
    )
    return {'phi_ref': phi_ref, 'phi_1': phi_1, 'final': final,
            'status': {method: trace.status for method, trace in traces.items()}}

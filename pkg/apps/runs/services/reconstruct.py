# ==============================================
# RECONSTRUCT COMMAND
# ==============================================
"""
Runs one reconstruction method over the data sets of a simulate
output. Each data set is an independent Celery task writing into
`<output>/<method>/<data set>/`:

    images/iter_NNNN.img   checkpoints every `checkpoint_stride` and at the end
    final.img, final.png   reported image and its preview
    history.csv            per-iteration log-likelihood (ADMM: full history)
"""

import logging
from pathlib import Path

from django.conf import settings

from apps.admm.checkpoint import checkpoint_image_path
from apps.admm.engine import admm_reconstruct, rho_sweep
from apps.admm.state import AdmmConfig
from apps.baselines.kernel import KernelConfig, build_kernel_matrix, kernel_em_reconstruct
from apps.baselines.postfilter import em_filter_reconstruct
from apps.core.exceptions import GridMismatchError
from apps.core.utils import derive_seed, write_csv
from apps.imaging.images import Image
from apps.imaging.io import load_image, save_image
from apps.neuralnet.network import NetConfig
from apps.optimizers.trace import LbfgsConfig
from apps.poisson.em import EmWorkspace, mlem_reconstruct
from apps.projection.io import load_sinogram
from .common import SimulationLayout, run_tasks, system_matrix, write_preview

logger = logging.getLogger(__name__)


def admm_config_of(config: dict) -> AdmmConfig:
    block, lbfgs = config['admm'], config['lbfgs']
    return AdmmConfig(
        rho=block['rho'],
        outer_iterations=block['outer_iterations'],
        em_subiterations=block['em_subiterations'],
        network_iterations=block['network_iterations'],
        input_mode=block['input_mode'],
        seed=derive_seed(config['seed'], 'network'),
        lbfgs=lbfgs_config_of(lbfgs),
        checkpoint_stride=config['checkpoint_stride'],
    )


def lbfgs_config_of(block: dict, max_iterations: int = 20) -> LbfgsConfig:
    return LbfgsConfig(
        memory=block['memory'],
        max_iterations=max_iterations,
        c1=block['c1'],
        c2=block['c2'],
        gradient_tolerance=block['gradient_tolerance'],
    )


def net_config_of(block: dict, seed: int = 0) -> NetConfig:
    return NetConfig(
        depth=block['depth'],
        base_channels=block['base_channels'],
        kernel_size=block['kernel_size'],
        negative_slope=block['negative_slope'],
        seed=seed,
    )


class CheckpointWriter:
    """on_iteration callback for the EM-type methods."""

    def __init__(self, directory: Path, workspace: EmWorkspace, n_iters: int, stride: int):
        self.directory = directory
        self.workspace = workspace
        self.n_iters = n_iters
        self.stride = stride
        self.rows = []

    def __call__(self, k: int, image: Image):
        self.rows.append((k, self.workspace.likelihood(image.flat)))
        if k % self.stride == 0 or k == self.n_iters:
            save_image(image, checkpoint_image_path(self.directory, k))


def _finish(directory: Path, image: Image):
    save_image(image, directory / 'final.img')
    write_preview(image, directory / 'final.png')


def reconstruct_dataset(config: dict, sinogram_path, output_dir) -> dict:
    """Reconstruct one sinogram with the configured method."""
    layout = SimulationLayout(config['simulation'])
    grid, geometry = layout.load_system()
    A = system_matrix(grid, geometry)
    y = load_sinogram(sinogram_path)
    if y.geometry != geometry:
        raise GridMismatchError(f"{sinogram_path} geometry {y.geometry} does not match {geometry}")

    directory = Path(output_dir)
    method = config['method']
    stride = config['checkpoint_stride']

    if method == 'dip-admm':
        prior = load_image(layout.prior)
        admm_config = admm_config_of(config)
        net_config = net_config_of(config['network'])
        if config.get('rhos'):
            runs = rho_sweep(y, A, prior, config['rhos'], admm_config, net_config, checkpoint_root=directory)
            for rho, (image, _) in runs.items():
                _finish(directory / f'rho_{rho:g}', image)
            return {'iterations': admm_config.outer_iterations, 'rhos': len(runs)}
        image, state = admm_reconstruct(y, A, prior, admm_config, net_config, checkpoint_dir=directory)
        _finish(directory, image)
        return {'iterations': state.n, 'likelihood': state.history.likelihood[-1]}

    n_iters = config['mlem']['iterations']
    writer = CheckpointWriter(directory, EmWorkspace(A, y), n_iters, stride)
    if method == 'mlem':
        image = mlem_reconstruct(y, A, n_iters, on_iteration=writer)
    elif method == 'em-filter':
        image = em_filter_reconstruct(y, A, n_iters, config['mlem']['filter_fwhm_mm'], 'mm', on_iteration=writer)
    else:
        prior = load_image(layout.prior)
        kernel = config['kernel']
        K = build_kernel_matrix(prior, KernelConfig(
            patch_radius=kernel['patch_radius'],
            search_radius=kernel['search_radius'],
            neighbors=kernel['neighbors'],
            sigma=kernel.get('sigma'),
            normalize=kernel['normalize'],
        ))
        image = kernel_em_reconstruct(y, A, K, n_iters, on_iteration=writer)

    if n_iters == 0:
        save_image(image, checkpoint_image_path(directory, 0))
    write_csv(directory / 'history.csv', ('iteration', 'likelihood'), writer.rows)
    _finish(directory, image)
    return {'iterations': n_iters, 'likelihood': writer.rows[-1][1] if writer.rows else None}


def cmd_reconstruct(config: dict, output_dir) -> dict:
    from apps.runs.tasks import reconstruct_realization

    layout = SimulationLayout(config['simulation'])
    datasets = layout.datasets(config['data'], config['tumor_free'])
    method = config['method']

    if method == 'dip-admm' and not config.get('rhos') \
            and config['admm']['rho'] == settings.RECON_DEFAULTS['admm']['rho']:
        logger.warning(
            f"Using the default rho={config['admm']['rho']:g}; it was tuned for clinical count "
            f"levels and should be re-tuned for these data"
        )

    method_dir = Path(output_dir) / method
    signatures = [
        reconstruct_realization.s(config, str(path), str(method_dir / name))
        for name, path in datasets
    ]
    logger.info(f"Reconstructing {len(signatures)} data sets with {method}")
    results = run_tasks(signatures)
    return {'method': method, 'datasets': [name for name, _ in datasets], 'results': results}

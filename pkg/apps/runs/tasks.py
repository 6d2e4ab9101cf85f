# ==============================================
# RUNS CELERY TASKS
# ==============================================
"""
Per-data-set work units. Arguments and results are plain JSON so the
tasks run the same in-process (eager) or on a worker pool.
"""

from celery import shared_task
import logging

logger = logging.getLogger(__name__)


@shared_task(name='apps.runs.tasks.reconstruct_realization')
def reconstruct_realization(config: dict, sinogram_path: str, output_dir: str):
    """
    Reconstruct one sinogram with the configured method into output_dir.
    """
    from apps.core.exceptions import ReconstructionError
    from .services.reconstruct import reconstruct_dataset

    try:
        result = reconstruct_dataset(config, sinogram_path, output_dir)
        logger.info(f"Reconstructed {sinogram_path} into {output_dir}")
        return {'status': 'success', 'sinogram': sinogram_path, **result}
    except ReconstructionError as e:
        logger.error(f"Reconstruction of {sinogram_path} failed: {e}")
        return {'status': 'error', 'code': e.code, 'message': f"{sinogram_path}: {e.message}"}


@shared_task(name='apps.runs.tasks.denoise_case')
def denoise_case(config: dict, case: dict, output_dir: str):
    """
    Denoise one case into output_dir.
    """
    from apps.core.exceptions import ReconstructionError
    from .services.denoise import denoise_single

    try:
        result = denoise_single(config, case, output_dir)
        return {'status': 'success', **result}
    except ReconstructionError as e:
        logger.error(f"Denoising case {case.get('name')} failed: {e}")
        return {'status': 'error', 'code': e.code, 'message': f"case {case.get('name')}: {e.message}"}

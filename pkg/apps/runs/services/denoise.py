# ==============================================
# DENOISE COMMAND
# ==============================================
"""
Post-reconstruction denoising of one or more cases with a Gaussian
filter, guided NLM or the personalized network. Each case writes
`<output>/<case>/denoised.img` and a preview; CNR and PSNR tables are
written when ROIs or references are supplied.
"""

import logging
from pathlib import Path

from apps.admm.direct import denoise_direct
from apps.baselines.nlm import NlmConfig, nlm_guided_filter
from apps.core.exceptions import ConfigurationError
from apps.core.utils import derive_seed, write_csv
from apps.imaging.io import load_image, load_rois, save_image
from apps.metrics.measures import cnr, psnr
from apps.poisson.filters import gaussian_filter
from .common import run_tasks, write_preview
from .reconstruct import lbfgs_config_of, net_config_of

logger = logging.getLogger(__name__)


def _case_cnr(image, rois_path, lesion_label: str, muscle_labels) -> float:
    rois = {roi.label: roi for roi in load_rois(rois_path, image.grid)}
    if lesion_label not in rois:
        raise ConfigurationError(f"no ROI labelled '{lesion_label}' in {rois_path}", key='lesion')
    missing = [label for label in muscle_labels if label not in rois]
    if missing:
        raise ConfigurationError(f"no ROI labelled {missing} in {rois_path}", key='muscle')
    return cnr(image, rois[lesion_label], [rois[label] for label in muscle_labels])


def denoise_single(config: dict, case: dict, output_dir) -> dict:
    method = config['method']
    block = config['denoise']
    noisy = load_image(case['noisy'])

    if method == 'gaussian':
        image = gaussian_filter(noisy, block['gaussian_fwhm_px'], unit='px')
    else:
        guide = load_image(case['guide'])
        if method == 'nlm':
            nlm = config['nlm']
            image = nlm_guided_filter(noisy, guide, NlmConfig(nlm['window'], nlm['patch'], nlm.get('h')))
        else:
            seed = derive_seed(config['seed'], 'network')
            image = denoise_direct(
                noisy, guide,
                epochs=block['epochs'],
                seed=seed,
                net_config=net_config_of(config['network'], seed),
                input_mode=block['input_mode'],
                lbfgs=lbfgs_config_of(config['lbfgs'], max_iterations=block['epochs']),
            )

    directory = Path(output_dir)
    save_image(image, directory / 'denoised.img')
    write_preview(image, directory / 'denoised.png')

    result = {'name': case['name']}
    if 'rois' in case:
        result['cnr'] = _case_cnr(image, case['rois'], config['lesion'], config['muscle'])
    if 'reference' in case:
        result['psnr'] = psnr(image, load_image(case['reference']))
    logger.info(f"Denoised case {case['name']} with {method}")
    return result


def cmd_denoise(config: dict, output_dir) -> dict:
    from apps.runs.tasks import denoise_case

    output_dir = Path(output_dir)
    signatures = [denoise_case.s(config, case, str(output_dir / case['name'])) for case in config['cases']]
    results = run_tasks(signatures)

    method = config['method']
    with_cnr = [r for r in results if 'cnr' in r]
    if with_cnr:
        write_csv(output_dir / 'cnr.csv', ('case', 'method', 'cnr'),
                  [(r['name'], method, r['cnr']) for r in with_cnr])
    with_psnr = [r for r in results if 'psnr' in r]
    if with_psnr:
        write_csv(output_dir / 'psnr.csv', ('case', 'method', 'psnr'),
                  [(r['name'], method, r['psnr']) for r in with_psnr])
    return {'method': method, 'cases': [r['name'] for r in results]}

import json
import shutil
import tempfile
from io import StringIO
from pathlib import Path

import numpy as np
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, TestCase

from apps.core.exceptions import ConfigurationError
from apps.core.utils import read_csv
from apps.imaging.images import Image, ImageGrid
from apps.imaging.io import load_image, save_image, save_rois
from apps.imaging.rois import circular_roi
from apps.poisson.em import default_initial_image
from apps.poisson.filters import gaussian_filter
from apps.projection.io import load_sinogram
from apps.projection.operators import build_system_matrix
from .models import Run
from .serializers import flatten_errors, resolve_config
from .services.common import SimulationLayout

SIMULATION = {
    'grid': {'width': 32, 'height': 32, 'pixel_size_mm': 4.0},
    'geometry': {'n_angles': 16, 'n_bins': 45, 'bin_size_mm': 4.0},
    'phantom': {},
    'counts': {'total_counts': 4e4, 'n_realizations': 3, 'thin_ratio': 0.5},
    'metrics': {'background_roi_count': 4},
}

SMALL_NETWORK = {'depth': 2, 'base_channels': 2}


def output_files(root: Path) -> dict:
    """Relative path -> bytes for every file outside logs/."""
    return {
        str(p.relative_to(root)): p.read_bytes()
        for p in sorted(root.rglob('*'))
        if p.is_file() and p.relative_to(root).parts[0] != 'logs'
    }


class ConfigResolutionTests(SimpleTestCase):

    def test_defaults_are_filled(self):
        resolved = resolve_config('reconstruct', {'simulation': 'sim', 'method': 'mlem'})
        self.assertEqual(resolved['admm']['rho'], 3e-3)
        self.assertEqual(resolved['mlem']['iterations'], 100)
        self.assertEqual(resolved['checkpoint_stride'], 20)
        self.assertEqual(resolved['data'], 'realizations')
        self.assertEqual(resolved['seed'], 0)

    def test_file_values_override_defaults(self):
        resolved = resolve_config('reconstruct', {
            'simulation': 'sim', 'method': 'dip-admm', 'admm': {'rho': 0.5}, 'seed': 4,
        })
        self.assertEqual(resolved['admm']['rho'], 0.5)
        self.assertEqual(resolved['admm']['outer_iterations'], 60)
        self.assertEqual(resolved['seed'], 4)

    def test_seed_override(self):
        resolved = resolve_config('simulate', {'phantom': {}, 'seed': 1}, seed=9)
        self.assertEqual(resolved['seed'], 9)

    def test_seed_must_fit_the_run_ledger(self):
        resolved = resolve_config('simulate', {'phantom': {}}, seed=2 ** 63 - 1)
        self.assertEqual(resolved['seed'], 2 ** 63 - 1)
        with self.assertRaisesMessage(ConfigurationError, 'seed'):
            resolve_config('simulate', {'phantom': {}}, seed=2 ** 63)
        with self.assertRaisesMessage(ConfigurationError, 'seed'):
            resolve_config('metrics', {'simulation': 's', 'reconstructions': [{'method': 'm', 'path': 'p'}],
                                       'seed': 2 ** 64})

    def test_input_mode_choices(self):
        with self.assertRaisesMessage(ConfigurationError, 'admm.input_mode'):
            resolve_config('reconstruct', {'simulation': 's', 'method': 'dip-admm', 'admm': {'input_mode': 'zeros'}})
        resolved = resolve_config('denoise', {'method': 'gaussian', 'cases': [{'name': 'a', 'noisy': 'n'}],
                                              'denoise': {'input_mode': 'noise'}})
        self.assertEqual(resolved['denoise']['input_mode'], 'noise')

    def test_unknown_keys_rejected_with_path(self):
        with self.assertRaisesMessage(ConfigurationError, 'bogus: Unknown key.'):
            resolve_config('simulate', {'phantom': {}, 'bogus': 1})
        with self.assertRaisesMessage(ConfigurationError, 'admm.bogus: Unknown key.'):
            resolve_config('reconstruct', {'simulation': 's', 'method': 'mlem', 'admm': {'bogus': 1}})

    def test_missing_phantom_block_names_the_key(self):
        with self.assertRaisesMessage(ConfigurationError, 'phantom: This field is required.'):
            resolve_config('simulate', {'grid': {'width': 8}})

    def test_value_errors_name_the_key(self):
        with self.assertRaisesMessage(ConfigurationError, 'grid.pixel_size_mm'):
            resolve_config('simulate', {'phantom': {}, 'grid': {'pixel_size_mm': 0}})
        with self.assertRaisesMessage(ConfigurationError, 'method'):
            resolve_config('reconstruct', {'simulation': 's', 'method': 'fbp'})

    def test_guide_required_for_nlm_and_dip(self):
        config = {'method': 'nlm', 'cases': [{'name': 'a', 'noisy': 'n.img'}]}
        with self.assertRaisesMessage(ConfigurationError, 'cases.0.guide'):
            resolve_config('denoise', config)
        config['method'] = 'gaussian'
        self.assertEqual(resolve_config('denoise', config)['denoise']['gaussian_fwhm_px'], 1.0)

    def test_rho_list_only_for_dip_admm(self):
        with self.assertRaisesMessage(ConfigurationError, 'rhos'):
            resolve_config('reconstruct', {'simulation': 's', 'method': 'mlem', 'rhos': [1e-3]})

    def test_empty_reconstruction_list(self):
        with self.assertRaisesMessage(ConfigurationError, 'reconstructions'):
            resolve_config('metrics', {'simulation': 's', 'reconstructions': []})

    def test_resolved_config_resolves_to_itself(self):
        resolved = resolve_config('denoise', {'method': 'dip', 'cases': [{'name': 'a', 'noisy': 'n', 'guide': 'g'}]})
        self.assertEqual(resolve_config('denoise', resolved), resolved)

    def test_flatten_nested_list_errors(self):
        detail = {'cases': [{}, {'noisy': ['This field is required.']}], 'seed': ['Bad.']}
        self.assertEqual(flatten_errors(detail), ['cases.1.noisy: This field is required.', 'seed: Bad.'])


class CommandTestCase(TestCase):

    def setUp(self):
        self.tmp = Path(tempfile.mkdtemp())
        self.addCleanup(shutil.rmtree, self.tmp, ignore_errors=True)
        self.configs = 0

    def run_command(self, command, config, output, **options):
        self.configs += 1
        path = self.tmp / f'{command}_{self.configs}.json'
        path.write_text(json.dumps(config), encoding='utf-8')
        call_command(command, config=str(path), output=str(output), stdout=StringIO(), **options)
        return Path(output)

    def simulate(self, name='sim', **blocks):
        config = json.loads(json.dumps(SIMULATION))
        for key, value in blocks.items():
            config[key] = {**config.get(key, {}), **value}
        return self.run_command('simulate', config, self.tmp / name)

    def reconstruct(self, simulation, output, **config):
        return self.run_command('reconstruct', {'simulation': str(simulation), **config}, output)

    def assertExitCode(self, code, context):
        self.assertEqual(context.exception.returncode, code)


class SimulateCommandTests(CommandTestCase):

    def test_writes_the_output_layout(self):
        root = self.simulate()
        layout = SimulationLayout(root)
        for path in (layout.system, layout.activity, layout.prior, layout.rois, layout.full,
                     layout.activity.with_suffix('.png'), root / 'resolved_config.json',
                     root / 'logs' / 'run.log', root / 'phantom' / 'spec.json'):
            self.assertTrue(path.exists(), path)
        self.assertEqual(sorted(p.name for p in (root / 'realizations').glob('*.sino')),
                         ['r_00.sino', 'r_01.sino', 'r_02.sino'])
        self.assertEqual(set(layout.tissue_masks()), {'gray', 'white', 'ventricle'})
        rois = json.loads(layout.rois.read_text())['rois']
        labels = [roi['label'] for roi in rois]
        self.assertEqual(labels[:3], ['tumor_0', 'tumor_1', 'tumor_2'])
        self.assertEqual(sum(label.startswith('background') for label in labels), 4)

    def test_thinned_realizations_scale(self):
        layout = SimulationLayout(self.simulate())
        full = load_sinogram(layout.full)
        thinned = load_sinogram(layout.realization(0))
        self.assertAlmostEqual(thinned.activity_scale, 0.5 * full.activity_scale)
        self.assertTrue(np.all(thinned.counts <= full.counts))

    def test_rerun_is_byte_identical(self):
        first = output_files(self.simulate('first'))
        second = output_files(self.simulate('second'))
        self.assertEqual(first.keys(), second.keys())
        for name in first:
            self.assertEqual(first[name], second[name], name)

    def test_resolved_config_reproduces_the_run(self):
        root = self.simulate('first')
        resolved = json.loads((root / 'resolved_config.json').read_text())
        again = self.run_command('simulate', resolved, self.tmp / 'again')
        self.assertEqual(output_files(root), output_files(again))

    def test_seed_flag_changes_the_counts(self):
        base = self.simulate('base')
        other = self.run_command('simulate', SIMULATION, self.tmp / 'other', seed=5)
        self.assertEqual(json.loads((other / 'resolved_config.json').read_text())['seed'], 5)
        self.assertNotEqual((base / 'sinograms' / 'full.sino').read_bytes(),
                            (other / 'sinograms' / 'full.sino').read_bytes())

    def test_tumor_free_companions_share_the_scale(self):
        layout = SimulationLayout(self.simulate(counts={'tumor_difference': True}))
        with_tumor = load_sinogram(layout.realization(1))
        without = load_sinogram(layout.realization(1, tumor_free=True))
        self.assertEqual(with_tumor.activity_scale, without.activity_scale)
        self.assertTrue(layout.activity_tumor_free.exists())
        self.assertLess(without.counts.sum(), with_tumor.counts.sum())

    def test_external_images(self):
        grid = ImageGrid(32, 32, 4.0)
        rng = np.random.default_rng(0)
        activity = Image(grid, rng.uniform(0.5, 2.0, grid.shape).astype(np.float32))
        save_image(activity, self.tmp / 'activity.img')
        save_image(Image(grid, np.ones(grid.shape)), self.tmp / 'prior.img')
        root = self.simulate(phantom={'activity_image': str(self.tmp / 'activity.img'),
                                      'prior_image': str(self.tmp / 'prior.img')})
        np.testing.assert_array_equal(load_image(SimulationLayout(root).activity).values, activity.values)
        self.assertFalse(SimulationLayout(root).rois.exists())

    def test_missing_phantom_exits_with_config_error(self):
        config = {key: value for key, value in SIMULATION.items() if key != 'phantom'}
        with self.assertRaises(CommandError) as context:
            self.run_command('simulate', config, self.tmp / 'sim')
        self.assertExitCode(2, context)
        self.assertIn('phantom', str(context.exception))

    def test_malformed_json_reports_the_line(self):
        path = self.tmp / 'broken.json'
        path.write_text('{\n  "phantom": {,\n}', encoding='utf-8')
        with self.assertRaises(CommandError) as context:
            call_command('simulate', config=str(path), output=str(self.tmp / 'sim'), stdout=StringIO())
        self.assertExitCode(2, context)
        self.assertIn('line 2', str(context.exception))

    def test_run_ledger(self):
        self.simulate()
        run = Run.objects.get(command='simulate')
        self.assertEqual(run.status, Run.Status.SUCCEEDED)
        self.assertEqual(len(run.config_hash), 64)
        self.assertIsNotNone(run.finished_at)


class ReconstructCommandTests(CommandTestCase):

    def setUp(self):
        super().setUp()
        self.simulation = self.simulate()

    def test_mlem_zero_iterations_writes_initial_image(self):
        out = self.reconstruct(self.simulation, self.tmp / 'rec', method='mlem', data='full',
                               mlem={'iterations': 0})
        layout = SimulationLayout(self.simulation)
        grid, geometry = layout.load_system()
        expected = default_initial_image(load_sinogram(layout.full), build_system_matrix(grid, geometry))
        final = load_image(out / 'mlem' / 'full' / 'final.img')
        np.testing.assert_array_equal(final.values, expected.values.astype(np.float32))
        self.assertTrue((out / 'mlem' / 'full' / 'final.png').exists())

    def test_checkpoints_and_history(self):
        out = self.reconstruct(self.simulation, self.tmp / 'rec', method='mlem',
                               mlem={'iterations': 5}, checkpoint_stride=2)
        for name in ('r_00', 'r_01', 'r_02'):
            images = sorted(p.name for p in (out / 'mlem' / name / 'images').glob('*.img'))
            self.assertEqual(images, ['iter_0002.img', 'iter_0004.img', 'iter_0005.img'])
            history = read_csv(out / 'mlem' / name / 'history.csv')
            likelihood = [float(row['likelihood']) for row in history]
            self.assertEqual(len(likelihood), 5)
            self.assertTrue(all(b >= a - 1e-9 * abs(a) for a, b in zip(likelihood, likelihood[1:])))

    def test_rerun_gives_identical_checkpoints(self):
        config = {'method': 'em-filter', 'mlem': {'iterations': 3}, 'checkpoint_stride': 1}
        first = output_files(self.reconstruct(self.simulation, self.tmp / 'a', **config))
        second = output_files(self.reconstruct(self.simulation, self.tmp / 'b', **config))
        self.assertEqual(first, second)

    def test_kmri(self):
        out = self.reconstruct(self.simulation, self.tmp / 'rec', method='kmri', data='full',
                               mlem={'iterations': 2})
        self.assertTrue(load_image(out / 'kmri' / 'full' / 'final.img').is_nonnegative())

    def test_dip_admm_input_modes_differ(self):
        config = {'method': 'dip-admm', 'data': 'full', 'network': SMALL_NETWORK, 'checkpoint_stride': 1}
        with self.assertLogs('apps.runs.services.reconstruct', level='WARNING'):
            prior = self.reconstruct(self.simulation, self.tmp / 'prior',
                                     admm={'outer_iterations': 2, 'network_iterations': 2}, **config)
        noise = self.reconstruct(self.simulation, self.tmp / 'noise',
                                 admm={'outer_iterations': 2, 'network_iterations': 2, 'input_mode': 'noise'},
                                 **config)
        run = prior / 'dip-admm' / 'full'
        for name in ('final.img', 'history.csv', 'state.npz', 'params.bin', 'images/iter_0002.img'):
            self.assertTrue((run / name).exists(), name)
        self.assertNotEqual((run / 'final.img').read_bytes(),
                            (noise / 'dip-admm' / 'full' / 'final.img').read_bytes())

    def test_rho_sweep_writes_one_history_per_rho(self):
        out = self.reconstruct(self.simulation, self.tmp / 'rec', method='dip-admm', data='full',
                               rhos=[1e-3, 1e-1], network=SMALL_NETWORK,
                               admm={'outer_iterations': 2, 'network_iterations': 1})
        for rho in ('rho_0.001', 'rho_0.1'):
            self.assertEqual(len(read_csv(out / 'dip-admm' / 'full' / rho / 'history.csv')), 2)
            self.assertTrue((out / 'dip-admm' / 'full' / rho / 'final.img').exists())

    def test_missing_simulation_is_a_config_error(self):
        with self.assertRaises(CommandError) as context:
            self.reconstruct(self.tmp / 'nowhere', self.tmp / 'rec', method='mlem')
        self.assertExitCode(2, context)

    def test_runtime_failure_exit_code(self):
        system = json.loads((self.simulation / 'system.json').read_text())
        system['geometry']['n_angles'] = 8
        (self.simulation / 'system.json').write_text(json.dumps(system))
        with self.assertRaises(CommandError) as context:
            self.reconstruct(self.simulation, self.tmp / 'rec', method='mlem', data='full')
        self.assertExitCode(3, context)
        self.assertEqual(Run.objects.get(command='reconstruct').status, Run.Status.FAILED)


class DenoiseCommandTests(CommandTestCase):

    def setUp(self):
        super().setUp()
        self.grid = ImageGrid(16, 16, 2.0)
        rng = np.random.default_rng(3)
        clean = np.ones(self.grid.shape)
        clean[6:10, 6:10] = 3.0
        self.noisy = Image(self.grid, (clean + rng.normal(0, 0.3, self.grid.shape)).astype(np.float32))
        save_image(self.noisy, self.tmp / 'noisy.img')
        save_image(Image(self.grid, clean), self.tmp / 'guide.img')
        save_rois([circular_roi(self.grid, (0.0, 0.0), 6.0, 'lesion'),
                   circular_roi(self.grid, (-9.0, -9.0), 8.0, 'muscle')], self.tmp / 'rois.json')

    def case(self, **extra):
        return {'name': 'case_a', 'noisy': str(self.tmp / 'noisy.img'), **extra}

    def test_gaussian_matches_filter(self):
        out = self.run_command('denoise', {'method': 'gaussian', 'cases': [self.case()]}, self.tmp / 'out')
        expected = gaussian_filter(self.noisy, 1.0, unit='px')
        np.testing.assert_array_equal(load_image(out / 'case_a' / 'denoised.img').values,
                                      expected.values.astype(np.float32))

    def test_nlm_needs_a_guide(self):
        with self.assertRaises(CommandError) as context:
            self.run_command('denoise', {'method': 'nlm', 'cases': [self.case()]}, self.tmp / 'out')
        self.assertExitCode(2, context)
        self.assertIn('guide', str(context.exception))

    def test_cnr_and_psnr_tables(self):
        case = self.case(guide=str(self.tmp / 'guide.img'), rois=str(self.tmp / 'rois.json'),
                         reference=str(self.tmp / 'guide.img'))
        out = self.run_command('denoise', {'method': 'nlm', 'cases': [case]}, self.tmp / 'out')
        rows = read_csv(out / 'cnr.csv')
        self.assertEqual([(r['case'], r['method']) for r in rows], [('case_a', 'nlm')])
        self.assertGreater(float(rows[0]['cnr']), 0)
        self.assertEqual(len(read_csv(out / 'psnr.csv')), 1)

    def test_dip_is_reproducible(self):
        config = {'method': 'dip', 'cases': [self.case(guide=str(self.tmp / 'guide.img'))],
                  'denoise': {'epochs': 3}, 'network': SMALL_NETWORK}
        first = self.run_command('denoise', config, self.tmp / 'a')
        second = self.run_command('denoise', config, self.tmp / 'b')
        self.assertEqual(output_files(first), output_files(second))

    def test_missing_lesion_roi(self):
        case = self.case(rois=str(self.tmp / 'rois.json'))
        with self.assertRaises(CommandError) as context:
            self.run_command('denoise', {'method': 'gaussian', 'cases': [case], 'lesion': 'tumor'},
                             self.tmp / 'out')
        self.assertExitCode(2, context)


class CompareOptimizersCommandTests(CommandTestCase):

    def test_normalized_cost_table_and_plot(self):
        layout = SimulationLayout(self.simulate())
        config = {
            'target': str(layout.activity), 'prior': str(layout.prior),
            'compare': {'iterations': 6, 'reference_iterations': 10},
            'network': SMALL_NETWORK,
        }
        out = self.run_command('compare_optimizers', config, self.tmp / 'cmp')
        rows = read_csv(out / 'normalized_cost.csv')
        self.assertEqual(len(rows), 6)
        self.assertEqual(list(rows[0]), ['iteration', 'adam', 'nag', 'lbfgs'])
        lbfgs = [float(row['lbfgs']) for row in rows]
        self.assertTrue(all(b <= a + 1e-12 for a, b in zip(lbfgs, lbfgs[1:])))
        self.assertAlmostEqual(float(rows[0]['adam']), 1.0)
        self.assertTrue((out / 'normalized_cost.png').read_bytes().startswith(b'\x89PNG'))
        self.assertTrue((out / 'logs' / 'trace_adam_reference.csv').exists())


class MetricsCommandTests(CommandTestCase):

    def test_curves_and_tumor_only_images(self):
        simulation = self.simulate(counts={'tumor_difference': True})
        rec = self.reconstruct(simulation, self.tmp / 'rec', method='mlem', tumor_free=True,
                               mlem={'iterations': 4}, checkpoint_stride=2)
        config = {
            'simulation': str(simulation),
            'reconstructions': [{'method': 'mlem', 'path': str(rec / 'mlem')}],
            'tumor_difference': True,
            'metrics': {'checkpoint_stride': 2},
        }
        out = self.run_command('metrics', config, self.tmp / 'metrics')
        crc_rows = read_csv(out / 'crc_curve.csv')
        self.assertEqual([int(r['iteration']) for r in crc_rows], [2, 4])
        self.assertEqual({r['method'] for r in crc_rows}, {'mlem'})
        self.assertEqual(len(read_csv(out / 'cr_curve.csv')), 2)
        for name in ('r_00', 'r_01', 'r_02'):
            self.assertTrue((out / 'tumor_only' / 'mlem' / f'{name}.img').exists())
        self.assertEqual(len(read_csv(out / 'tumor_only_cr.csv')), 3)

    def test_empty_realization_directory(self):
        simulation = self.simulate()
        (self.tmp / 'empty').mkdir()
        config = {'simulation': str(simulation), 'reconstructions': [{'method': 'mlem', 'path': str(self.tmp / 'empty')}]}
        with self.assertRaises(CommandError) as context:
            self.run_command('metrics', config, self.tmp / 'metrics')
        self.assertExitCode(2, context)

    def test_missing_rois(self):
        simulation = self.simulate()
        (simulation / 'rois.json').unlink()
        config = {'simulation': str(simulation), 'reconstructions': [{'method': 'mlem', 'path': str(self.tmp)}]}
        with self.assertRaises(CommandError) as context:
            self.run_command('metrics', config, self.tmp / 'metrics')
        self.assertIn('rois', str(context.exception))

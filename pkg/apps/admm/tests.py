import tempfile
from dataclasses import replace
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase, tag

from apps.baselines.nlm import nlm_guided_filter
from apps.core.exceptions import ConfigurationError, NonFiniteStateError
from apps.imaging.images import Image, ImageGrid
from apps.metrics.measures import cnr, psnr
from apps.neuralnet.model import NetworkModel, forward, init_params, prepare_input
from apps.neuralnet.network import NetConfig
from apps.poisson.em import EmWorkspace, mlem_reconstruct
from apps.poisson.filters import gaussian_filter
from apps.projection.blur import BlurOperator
from apps.projection.geometry import ProjectionGeometry, Sinogram
from apps.projection.operators import build_system_matrix
from apps.simulation.counts import simulate_counts
from apps.simulation.phantom import default_background_rois, default_brain_spec, make_phantom
from .direct import deblur_reconstruct, denoise_direct
from .engine import admm_reconstruct, admm_step
from .representations import PixelRepresentation
from .state import AdmmConfig, AdmmState


def small_problem(seed=0, width=8, additive=0.5):
    grid = ImageGrid(width, width, 2.0)
    A = build_system_matrix(grid, ProjectionGeometry(6, 12, 2.0))
    rng = np.random.default_rng(seed)
    truth = Image(grid, rng.uniform(0.5, 2.0, grid.shape))
    y = Sinogram(A.geometry, rng.poisson(A.project(truth) + additive).astype(float),
                 np.full(A.n_measurements, additive))
    return A, y, truth


def identity_problem(width, seed=0, additive=0.5):
    grid = ImageGrid(width, width, 1.0)
    counts = np.random.default_rng(seed).integers(1, 20, grid.n_pixels).astype(float)
    return BlurOperator(grid, [[1.0]]), Sinogram(None, counts, np.full(grid.n_pixels, additive))


class AdmmConfigTests(SimpleTestCase):

    def test_validation(self):
        with self.assertRaises(ConfigurationError):
            AdmmConfig(rho=0.0)
        with self.assertRaises(ConfigurationError):
            AdmmConfig(em_subiterations=0)
        with self.assertRaises(ConfigurationError):
            AdmmConfig(input_mode='zeros')
        self.assertEqual(AdmmConfig(network_iterations=0).network_iterations, 0)

    def test_defaults(self):
        config = AdmmConfig()
        self.assertEqual(config.rho, 3e-3)
        self.assertEqual(config.em_subiterations, 2)
        self.assertEqual(config.network_iterations, 20)


class ScalarProblemTests(SimpleTestCase):

    def test_identity_representation_reaches_ml_solution(self):
        grid = ImageGrid(1, 1, 1.0)
        A, y = BlurOperator(grid, [[1.0]]), Sinogram(None, [5.0], [1.0])
        state = AdmmState(Image(grid, [1.0]), Image.zeros(grid), Image.zeros(grid), PixelRepresentation(grid))
        workspace = EmWorkspace(A, y)
        config = AdmmConfig(rho=0.5, network_iterations=5)
        for _ in range(100):
            admm_step(state, workspace, config)
        self.assertAlmostEqual(float(state.x.flat[0]), 4.0, delta=1e-6)
        self.assertAlmostEqual(float(state.representation.theta[0]), 4.0, delta=1e-6)
        self.assertAlmostEqual(float(state.reported.flat[0]), 4.0, delta=1e-6)


class AdmmInvariantTests(SimpleTestCase):

    def record(self, y, A, alpha, config, **kwargs):
        states = []

        def keep(n, state):
            states.append((n, state.x.flat.copy(), state.mu.flat.copy(), state.f.flat.copy()))

        image, final = admm_reconstruct(y, A, alpha, config, on_iteration=keep, **kwargs)
        return image, final, states

    def test_dual_update_and_nonnegativity_with_network(self):
        A, y, truth = small_problem()
        config = AdmmConfig(rho=1e-2, outer_iterations=4, network_iterations=3)
        image, state, states = self.record(y, A, truth, config, net_config=NetConfig(depth=2, base_channels=2))
        self.assertIsInstance(state.representation, NetworkModel)
        mu_prev = np.zeros(A.grid.n_pixels)
        for n, x, mu, f in states:
            self.assertTrue(np.all(x >= 0), f"iteration {n}")
            scale = max(1.0, np.abs(mu).max(), np.abs(x).max(), np.abs(f).max())
            np.testing.assert_allclose(mu - mu_prev - x + f, 0.0, atol=1e-14 * scale)
            mu_prev = mu
        self.assertTrue(image.is_nonnegative())
        self.assertEqual(len(state.history), 4)
        self.assertEqual(state.n, 4)

    def test_small_rho_frozen_representation_is_mlem(self):
        A, y, truth = small_problem(seed=2)
        config = AdmmConfig(rho=1e-12, outer_iterations=10, em_subiterations=1, network_iterations=0)
        _, _, states = self.record(y, A, truth, config, representation=PixelRepresentation(A.grid))
        mlem = []
        mlem_reconstruct(y, A, 10, on_iteration=lambda k, img: mlem.append(img.flat.copy()))
        for (_, x, _, _), expected in zip(states, mlem):
            np.testing.assert_allclose(x, expected, rtol=1e-6, atol=1e-12)

    def test_pixel_representation_satisfies_ml_stationarity(self):
        A, y = identity_problem(16)
        grid = A.grid
        config = AdmmConfig(rho=0.1, outer_iterations=200, network_iterations=5)
        image, state = admm_reconstruct(y, A, Image.zeros(grid), config, representation=PixelRepresentation(grid))
        x = state.x.flat
        gradient = A.adjoint(y.counts / (A.apply(x) + y.additive) - 1.0)
        self.assertLessEqual(np.max(np.abs(gradient)), 1e-6)
        np.testing.assert_allclose(image.flat, y.counts - y.additive, atol=1e-6)

    def test_input_modes_give_distinct_outputs(self):
        A, y, truth = small_problem(seed=1)
        config = AdmmConfig(outer_iterations=2, network_iterations=2)
        net = NetConfig(depth=2, base_channels=2)
        prior, _ = admm_reconstruct(y, A, truth, config, net)
        noise, _ = admm_reconstruct(y, A, truth, replace(config, input_mode='noise'), net)
        self.assertFalse(np.array_equal(prior.values, noise.values))

    def test_deterministic(self):
        A, y, truth = small_problem(seed=3)
        config = AdmmConfig(outer_iterations=2, network_iterations=2)
        net = NetConfig(depth=2, base_channels=2)
        first, _ = admm_reconstruct(y, A, truth, config, net)
        second, _ = admm_reconstruct(y, A, truth, config, net)
        np.testing.assert_array_equal(first.values, second.values)

    def test_non_finite_representation_aborts(self):
        A, y, truth = small_problem()
        representation = PixelRepresentation(A.grid)
        representation.evaluate = lambda theta=None: np.full(A.grid.n_pixels, np.nan)
        with self.assertRaises(NonFiniteStateError) as ctx:
            admm_reconstruct(y, A, truth, AdmmConfig(network_iterations=0), representation=representation)
        self.assertIn('f', ctx.exception.diagnostic)


class CheckpointTests(SimpleTestCase):

    def test_resume_matches_uninterrupted_run(self):
        A, y, truth = small_problem(seed=4)
        config = AdmmConfig(rho=1e-2, outer_iterations=6, network_iterations=3, checkpoint_stride=3)
        with tempfile.TemporaryDirectory() as tmp:
            full_dir, part_dir = Path(tmp) / 'full', Path(tmp) / 'part'
            full, full_state = admm_reconstruct(y, A, truth, config, representation=PixelRepresentation(A.grid),
                                                checkpoint_dir=full_dir)
            admm_reconstruct(y, A, truth, replace(config, outer_iterations=3),
                             representation=PixelRepresentation(A.grid), checkpoint_dir=part_dir)
            resumed, resumed_state = admm_reconstruct(y, A, truth, config, representation=PixelRepresentation(A.grid),
                                                      resume_from=part_dir)
            written = sorted(p.name for p in (full_dir / 'images').glob('*.img'))
            self.assertTrue((full_dir / 'history.csv').exists())
        np.testing.assert_array_equal(resumed.values, full.values)
        self.assertEqual(resumed_state.history.likelihood, full_state.history.likelihood)
        self.assertEqual(written, ['iter_0003.img', 'iter_0006.img'])

    def test_network_parameters_are_written(self):
        A, y, truth = small_problem()
        config = AdmmConfig(outer_iterations=1, network_iterations=1)
        with tempfile.TemporaryDirectory() as tmp:
            admm_reconstruct(y, A, truth, config, NetConfig(depth=2, base_channels=2), checkpoint_dir=tmp)
            self.assertTrue((Path(tmp) / 'params.bin').exists())
            self.assertTrue((Path(tmp) / 'params.json').exists())

    def test_resume_with_other_network_is_refused(self):
        A, y, truth = small_problem()
        config = AdmmConfig(outer_iterations=1, network_iterations=1)
        with tempfile.TemporaryDirectory() as tmp:
            admm_reconstruct(y, A, truth, config, NetConfig(depth=2, base_channels=2), checkpoint_dir=tmp)
            with self.assertRaises(ConfigurationError) as ctx:
                admm_reconstruct(y, A, truth, replace(config, outer_iterations=2),
                                 NetConfig(depth=2, base_channels=3), resume_from=tmp)
        self.assertEqual(ctx.exception.key, 'network')

    def test_missing_checkpoint(self):
        A, y, truth = small_problem()
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(ConfigurationError):
                admm_reconstruct(y, A, truth, representation=PixelRepresentation(A.grid), resume_from=tmp)


class DirectPathTests(SimpleTestCase):

    def test_denoise_exact_fit_returns_target(self):
        grid = ImageGrid(8, 8, 2.0)
        alpha = Image(grid, np.random.default_rng(0).random(grid.shape))
        config = NetConfig(depth=2, base_channels=2, seed=3)
        model = NetworkModel(config, prepare_input(alpha), init_params(config))
        noisy = forward(model)
        out = denoise_direct(noisy, alpha, epochs=5, seed=3, net_config=config)
        np.testing.assert_array_equal(out.values, noisy.values)

    def test_denoise_reduces_loss_and_is_deterministic(self):
        grid = ImageGrid(16, 16, 2.0)
        rng = np.random.default_rng(1)
        alpha = Image(grid, rng.random(grid.shape))
        noisy = Image(grid, rng.random(grid.shape))
        config = NetConfig(depth=2, base_channels=2)
        first = denoise_direct(noisy, alpha, epochs=10, seed=2, net_config=config)
        second = denoise_direct(noisy, alpha, epochs=10, seed=2, net_config=config)
        np.testing.assert_array_equal(first.values, second.values)

    def test_delta_psf_operator_is_identity(self):
        grid = ImageGrid(8, 8, 1.0)
        x = np.random.default_rng(0).random(grid.n_pixels)
        A = BlurOperator(grid, [[1.0]])
        np.testing.assert_array_equal(A.apply(x), x)
        np.testing.assert_array_equal(A.adjoint(x), x)

    def test_delta_psf_deblur_recovers_image(self):
        grid = ImageGrid(8, 8, 1.0)
        blurred = Image(grid, np.random.default_rng(5).uniform(1.0, 3.0, grid.shape))
        config = AdmmConfig(rho=0.1, outer_iterations=100, network_iterations=5)
        out = deblur_reconstruct(blurred, [[1.0]], Image.zeros(grid), config,
                                 representation=PixelRepresentation(grid))
        np.testing.assert_allclose(out.values, blurred.values, atol=1e-6)


def default_simulation(seed=0, total_counts=5e5):
    grid = ImageGrid(64, 64, 2.0)
    pair = make_phantom(default_brain_spec(grid))
    A = build_system_matrix(grid, ProjectionGeometry(96, 91, 2.0))
    return pair, A, simulate_counts(A, pair.activity, 0.1, total_counts, seed)


@tag('slow')
class AdmmTrendTests(SimpleTestCase):

    def test_likelihood_mostly_non_decreasing(self):
        pair, A, y = default_simulation()
        _, state = admm_reconstruct(y, A, pair.prior, AdmmConfig(outer_iterations=30))
        steps = np.diff(state.history.likelihood[5:])
        self.assertGreaterEqual(np.mean(steps >= 0), 0.9)

    def test_denoising_improves_psnr(self):
        grid = ImageGrid(64, 64, 2.0)
        pair = make_phantom(default_brain_spec(grid))
        clean = pair.activity
        wins = 0
        for seed in range(5):
            rng = np.random.default_rng(seed)
            noisy = clean.with_values(clean.values + rng.normal(0.0, 0.1 * clean.values.max(), grid.shape))
            out = denoise_direct(noisy, pair.prior, epochs=300, seed=seed)
            wins += psnr(out, clean) > psnr(noisy, clean)
        self.assertGreaterEqual(wins, 4)

    def test_prior_input_beats_noise_input(self):
        grid = ImageGrid(64, 64, 2.0)
        pair = make_phantom(default_brain_spec(grid))
        clean = pair.activity
        wins = 0
        for seed in range(5):
            rng = np.random.default_rng(100 + seed)
            noisy = clean.with_values(clean.values + rng.normal(0.0, 0.1 * clean.values.max(), grid.shape))
            prior = denoise_direct(noisy, pair.prior, epochs=300, seed=seed, input_mode='prior')
            noise = denoise_direct(noisy, pair.prior, epochs=300, seed=seed, input_mode='noise')
            wins += psnr(prior, clean) > psnr(noise, clean)
        self.assertGreaterEqual(wins, 4)


def lesion_case(index: int):
    """
    Brain phantom with a lesion of varying uptake, a guide image in which
    the lesion is visible, and white-matter ROIs standing in for muscle.
    """
    grid = ImageGrid(64, 64, 2.0)
    pair = make_phantom(default_brain_spec(grid, tumor_activity=6.0 + index))
    guide = pair.prior.values.copy()
    for roi in pair.tumor_masks:
        guide[roi.mask] = 1.4
    rng = np.random.default_rng(200 + index)
    clean = pair.activity
    noisy = clean.with_values(clean.values + rng.normal(0.0, 0.1 * clean.values.max(), grid.shape))
    return noisy, Image(grid, guide), pair.tumor_masks[0], default_background_rois(pair, count=6)


@tag('slow')
class DenoiseCnrOrderingTests(SimpleTestCase):

    def test_network_denoising_gives_the_best_cnr(self):
        beats_gaussian = beats_nlm = 0
        for index in range(5):
            noisy, guide, lesion, muscle = lesion_case(index)
            proposed = cnr(denoise_direct(noisy, guide, epochs=200, seed=index), lesion, muscle)
            nlm = cnr(nlm_guided_filter(noisy, guide), lesion, muscle)
            gaussian = cnr(gaussian_filter(noisy, 1.0, unit='px'), lesion, muscle)
            beats_gaussian += proposed > gaussian
            beats_nlm += proposed > nlm
        self.assertEqual(beats_gaussian, 5)
        self.assertGreaterEqual(beats_nlm, 4)

import numpy as np
from django.test import SimpleTestCase
from scipy.optimize import minimize_scalar

from apps.core.exceptions import ConfigurationError, ModelInfeasibleError
from apps.imaging.images import Image, ImageGrid
from apps.projection.blur import BlurOperator
from apps.projection.geometry import ProjectionGeometry, Sinogram
from apps.projection.operators import build_system_matrix
from apps.simulation.counts import simulate_counts
from apps.simulation.phantom import default_brain_spec, make_phantom
from .em import (
    EmWorkspace, default_initial_image, em_update, log_likelihood, mlem_reconstruct, surrogate_value,
)
from .filters import gaussian_filter
from .penalized import penalized_pixel_update


def scalar_problem(counts, additive=0.0):
    """One pixel seen by one bin with unit weight."""
    grid = ImageGrid(1, 1, 1.0)
    return BlurOperator(grid, [[1.0]]), Sinogram(None, [counts], [additive])


def small_problem(seed=0, width=8, additive=0.5):
    grid = ImageGrid(width, width, 2.0)
    A = build_system_matrix(grid, ProjectionGeometry(6, 12, 2.0))
    rng = np.random.default_rng(seed)
    truth = Image(grid, rng.uniform(0.5, 2.0, grid.shape))
    mean = A.project(truth) + additive
    y = Sinogram(A.geometry, rng.poisson(mean).astype(float), np.full(A.n_measurements, additive))
    return A, y, truth


class LogLikelihoodTests(SimpleTestCase):

    def test_zero_count_bin(self):
        A, y = scalar_problem(0.0)
        self.assertEqual(log_likelihood(y, Image.full(A.grid, 3.0), A), -3.0)

    def test_scalar_value(self):
        A, y = scalar_problem(2.0)
        self.assertAlmostEqual(log_likelihood(y, Image.full(A.grid, 2.0), A), 2 * np.log(2) - 2, places=12)

    def test_zero_mean_with_counts(self):
        A, y = scalar_problem(2.0)
        self.assertEqual(log_likelihood(y, Image.zeros(A.grid), A), float('-inf'))

    def test_negative_image(self):
        A, y = scalar_problem(2.0)
        with self.assertRaises(ConfigurationError):
            log_likelihood(y, Image.full(A.grid, -1.0), A)


class EmUpdateTests(SimpleTestCase):

    def test_scalar_update(self):
        A, y = scalar_problem(4.0)
        self.assertAlmostEqual(em_update(y, A, Image.full(A.grid, 2.0)).flat[0], 4.0, places=12)

    def test_fixed_point(self):
        A, _, truth = small_problem()
        s = np.full(A.n_measurements, 0.5)
        y = Sinogram(A.geometry, A.project(truth) + s, s)
        np.testing.assert_allclose(em_update(y, A, truth).flat, truth.flat, rtol=1e-13)

    def test_matches_dense_oracle(self):
        grid = ImageGrid(16, 16, 2.0)
        A = build_system_matrix(grid, ProjectionGeometry(10, 23, 2.0))
        rng = np.random.default_rng(3)
        x = Image(grid, rng.uniform(0.1, 1.0, grid.shape))
        s = np.full(A.n_measurements, 0.2)
        y = Sinogram(A.geometry, rng.poisson(A.project(x) + s).astype(float), s)
        dense = A.to_dense()
        a_dot = dense.sum(axis=0)
        expected = np.zeros(grid.n_pixels)
        for j in range(grid.n_pixels):
            if a_dot[j] > 0:
                total = 0.0
                for i in np.nonzero(dense[:, j])[0]:
                    total += dense[i, j] * y.counts[i] / (dense[i] @ x.flat + s[i])
                expected[j] = x.flat[j] / a_dot[j] * total
        np.testing.assert_allclose(em_update(y, A, x).flat, expected, rtol=1e-12)

    def test_outside_support_stays_zero(self):
        grid = ImageGrid(16, 16, 2.0)
        # Narrow detector: corner pixels are never seen
        A = build_system_matrix(grid, ProjectionGeometry(8, 10, 2.0))
        self.assertTrue(np.any(~A.support))
        y = Sinogram(A.geometry, np.full(A.n_measurements, 3.0))
        out = em_update(y, A, Image.full(grid, 1.0))
        self.assertFalse(out.flat[~A.support].any())

    def test_infeasible_bin(self):
        grid = ImageGrid(4, 4, 1.0)
        A = build_system_matrix(grid, ProjectionGeometry(1, 12, 1.0))
        counts = np.zeros(A.n_measurements)
        counts[0] = 3.0
        with self.assertRaises(ModelInfeasibleError):
            em_update(Sinogram(A.geometry, counts), A, Image.full(grid, 1.0))

    def test_scale_equivariance(self):
        A, y, _ = small_problem(seed=1)
        x = Image(A.grid, np.random.default_rng(2).uniform(0.5, 1.5, A.grid.shape))
        c = 3.7
        scaled = Sinogram(A.geometry, c * y.counts, c * y.additive)
        np.testing.assert_allclose(
            em_update(scaled, A, Image(A.grid, c * x.values)).flat, c * em_update(y, A, x).flat, rtol=1e-12
        )

    def test_monotone_on_random_states(self):
        A, y, _ = small_problem(seed=4)
        rng = np.random.default_rng(5)
        for _ in range(100):
            x = Image(A.grid, rng.uniform(0.01, 3.0, A.grid.shape))
            before = log_likelihood(y, x, A)
            after = log_likelihood(y, em_update(y, A, x), A)
            self.assertGreaterEqual(after, before - 1e-9 * abs(before))


class SurrogateTests(SimpleTestCase):

    def setUp(self):
        self.A, self.y, truth = small_problem(seed=6)
        rng = np.random.default_rng(7)
        self.x_n = Image(self.A.grid, rng.uniform(0.5, 1.5, self.A.grid.shape))

    def test_maximum_at_em_image(self):
        x_em = em_update(self.y, self.A, self.x_n)
        a_dot = self.A.column_sums
        expected = float(np.sum(a_dot * (x_em.flat * np.log(x_em.flat) - x_em.flat)))
        self.assertAlmostEqual(surrogate_value(x_em, self.x_n, self.y, self.A), expected, places=8)
        perturbed = Image(self.A.grid, x_em.values * 1.01)
        self.assertLess(surrogate_value(perturbed, self.x_n, self.y, self.A),
                        surrogate_value(x_em, self.x_n, self.y, self.A))

    def test_tangent_to_likelihood(self):
        h = 1e-5
        base = self.x_n.flat
        for j in range(0, self.A.grid.n_pixels, 5):
            step = np.zeros_like(base)
            step[j] = h
            plus, minus = Image(self.A.grid, base + step), Image(self.A.grid, base - step)
            dq = (surrogate_value(plus, self.x_n, self.y, self.A)
                  - surrogate_value(minus, self.x_n, self.y, self.A)) / (2 * h)
            dl = (log_likelihood(self.y, plus, self.A) - log_likelihood(self.y, minus, self.A)) / (2 * h)
            self.assertLess(abs(dq - dl), 1e-6 * (1 + abs(dl)))

    def test_minorizes_likelihood(self):
        rng = np.random.default_rng(8)
        q_n = surrogate_value(self.x_n, self.x_n, self.y, self.A)
        l_n = log_likelihood(self.y, self.x_n, self.A)
        for _ in range(100):
            x = Image(self.A.grid, rng.uniform(0.05, 4.0, self.A.grid.shape))
            gap_q = surrogate_value(x, self.x_n, self.y, self.A) - q_n
            gap_l = log_likelihood(self.y, x, self.A) - l_n
            self.assertLessEqual(gap_q, gap_l + 1e-9 * abs(l_n))


class PenalizedUpdateTests(SimpleTestCase):

    def test_reference_value(self):
        self.assertAlmostEqual(penalized_pixel_update(4.0, 1.0, 1.0, 2.0), 0.5 + 0.5 * np.sqrt(17), places=12)

    def test_large_rho_limit(self):
        for t in (2.0, -2.0):
            self.assertLessEqual(abs(penalized_pixel_update(4.0, 1.0, 1e12, t) - max(t, 0.0)), 1e-4)

    def test_small_rho_limit(self):
        value = penalized_pixel_update(4.0, 1.0, 1e-12, 2.0)
        self.assertLessEqual(abs(value - 4.0) / 4.0, 1e-4)

    def test_matches_one_dimensional_argmax(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            x_em = rng.uniform(0.01, 10.0)
            a_dot = rng.uniform(0.1, 10.0)
            rho = 10 ** rng.uniform(-2, 1)
            t = rng.uniform(-5.0, 5.0)

            def negative_objective(x):
                return -(a_dot * (x_em * np.log(x) - x) - 0.5 * rho * (x - t) ** 2)

            upper = max(x_em, t, 0.0) + 1.0
            best = minimize_scalar(negative_objective, bounds=(1e-300, upper), method='bounded',
                                   options={'xatol': 1e-11, 'maxiter': 2000})
            value = penalized_pixel_update(x_em, a_dot, rho, t)
            self.assertGreaterEqual(value, 0.0)
            self.assertLess(abs(value - best.x), 1e-6)

    def test_nonnegative_and_monotone(self):
        rng = np.random.default_rng(1)
        x_em = rng.uniform(0, 10, 500)
        a_dot = rng.uniform(0.1, 10, 500)
        rho = 10 ** rng.uniform(-4, 4, 500)
        t = rng.uniform(-10, 10, 500)
        base = penalized_pixel_update(x_em, a_dot, rho, t)
        self.assertTrue(np.all(base >= 0))
        self.assertTrue(np.all(penalized_pixel_update(x_em + 1e-3, a_dot, rho, t) >= base))
        self.assertTrue(np.all(penalized_pixel_update(x_em, a_dot, rho, t + 1e-3) >= base))

    def test_invalid_parameters(self):
        with self.assertRaises(ConfigurationError):
            penalized_pixel_update(1.0, 1.0, 0.0, 1.0)
        with self.assertRaises(ConfigurationError):
            penalized_pixel_update(1.0, 0.0, 1.0, 1.0)


class MlemTests(SimpleTestCase):

    def test_zero_iterations_returns_start(self):
        A, y, _ = small_problem()
        x0 = default_initial_image(y, A)
        np.testing.assert_array_equal(mlem_reconstruct(y, A, 0, x0).values, x0.values)

    def test_default_start_matches_counts(self):
        A, y, _ = small_problem()
        x0 = default_initial_image(y, A)
        level = (y.counts.sum() - y.additive.sum()) / A.column_sums.sum()
        np.testing.assert_allclose(x0.flat[A.support], level)

    def test_rejects_non_positive_start(self):
        A, y, _ = small_problem()
        with self.assertRaises(ConfigurationError):
            mlem_reconstruct(y, A, 1, Image.zeros(A.grid))

    def test_likelihood_non_decreasing_on_default_phantom(self):
        grid = ImageGrid(64, 64, 2.0)
        A = build_system_matrix(grid, ProjectionGeometry(96, 91, 2.0))
        truth = make_phantom(default_brain_spec(grid)).activity
        y = simulate_counts(A, truth, 0.1, 5e5, seed=0)
        values = []
        mlem_reconstruct(y, A, 100, on_iteration=lambda k, img: values.append(log_likelihood(y, img, A)))
        self.assertEqual(len(values), 100)
        for before, after in zip(values, values[1:]):
            self.assertGreaterEqual(after, before - 1e-9 * abs(before))

    def test_noise_free_error_decreases(self):
        grid = ImageGrid(16, 16, 2.0)
        A = build_system_matrix(grid, ProjectionGeometry(32, 23, 2.0))
        truth = make_phantom(default_brain_spec(grid, include_tumors=False)).activity
        y = Sinogram(A.geometry, A.project(truth))
        errors = []
        mlem_reconstruct(y, A, 50, on_iteration=lambda k, img: errors.append(
            np.sqrt(np.mean((img.flat - truth.flat) ** 2))))
        self.assertLess(errors[-1], errors[0])
        self.assertLess(errors[-1], errors[9])


class GaussianFilterTests(SimpleTestCase):

    def test_constant_image_unchanged(self):
        img = Image.full(ImageGrid(20, 20, 2.0), 3.0)
        np.testing.assert_allclose(gaussian_filter(img, 6.0).values, 3.0, rtol=1e-12)

    def test_impulse_matches_analytic_kernel(self):
        grid = ImageGrid(33, 33, 1.0)
        impulse = np.zeros(grid.shape)
        impulse[16, 16] = 1.0
        out = gaussian_filter(Image(grid, impulse), 3.0, unit='px').values
        sigma = 3.0 / 2.3548
        for k in range(1, 5):
            self.assertAlmostEqual(out[16 + k, 16] / out[16, 16], np.exp(-k * k / (2 * sigma ** 2)), places=6)
            self.assertAlmostEqual(out[16, 16 - k] / out[16, 16], np.exp(-k * k / (2 * sigma ** 2)), places=6)

    def test_tiny_fwhm_is_identity(self):
        img = Image(ImageGrid(10, 10, 1.0), np.random.default_rng(0).random((10, 10)))
        np.testing.assert_allclose(gaussian_filter(img, 0.2, unit='px').values, img.values, atol=1e-6)

    def test_mm_and_pixel_units_agree(self):
        img = Image(ImageGrid(16, 16, 2.0), np.random.default_rng(1).random((16, 16)))
        np.testing.assert_allclose(gaussian_filter(img, 6.0).values,
                                   gaussian_filter(img, 3.0, unit='px').values, rtol=1e-12)

    def test_rejects_non_positive_fwhm(self):
        with self.assertRaises(ConfigurationError):
            gaussian_filter(Image.zeros(ImageGrid(4, 4, 1.0)), 0.0)


class EmWorkspaceTests(SimpleTestCase):

    def test_penalized_step_with_tiny_rho_is_em(self):
        A, y, _ = small_problem(seed=9)
        workspace = EmWorkspace(A, y)
        x = default_initial_image(y, A).flat.copy()
        em = workspace.em_step(x)
        penalized = workspace.penalized_step(x, np.zeros_like(x), 1e-12)
        np.testing.assert_allclose(penalized[A.support], em[A.support], rtol=1e-6)

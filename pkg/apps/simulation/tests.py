import numpy as np
from django.test import SimpleTestCase

from apps.core.exceptions import ConfigurationError, ModelInfeasibleError
from apps.imaging.images import Image, ImageGrid
from apps.projection.blur import BlurOperator
from apps.projection.geometry import ProjectionGeometry, Sinogram
from apps.projection.operators import build_system_matrix
from .counts import simulate_counts, thin_counts
from .phantom import (
    EllipseSpec, PhantomSpec, TumorSpec, default_background_rois, default_brain_spec, make_phantom,
    phantom_spec_from_dict,
)

GRID = ImageGrid(64, 64, 2.0)


class PhantomTests(SimpleTestCase):

    def test_single_ellipse(self):
        grid = ImageGrid(16, 16, 1.0)
        spec = PhantomSpec(grid, [EllipseSpec((0.0, 0.0), (5.0, 3.0), 'a')], {'a': 1.0}, {'a': 0.7})
        pair = make_phantom(spec)
        inside = spec.ellipses[0].contains(*grid.pixel_centers())
        np.testing.assert_array_equal(pair.activity.values, inside.astype(float))
        np.testing.assert_array_equal(pair.prior.values > 0, inside)

    def test_tumor_only_in_activity(self):
        grid = ImageGrid(32, 32, 1.0)
        base = PhantomSpec(grid, [EllipseSpec((0.0, 0.0), (14.0, 14.0), 'white')], {'white': 1.0})
        with_tumor = PhantomSpec(grid, base.ellipses, base.activities,
                                 tumors=[TumorSpec((2.0, 2.0), 6.0, 4.0)])
        pair = make_phantom(with_tumor)
        mask = pair.tumor_masks[0].mask
        np.testing.assert_array_equal(pair.activity.values[mask], 4.0)
        np.testing.assert_array_equal(pair.prior.values, make_phantom(base).prior.values)

    def test_default_brain_tissue_means(self):
        pair = make_phantom(default_brain_spec(GRID))
        self.assertEqual(pair.tissue_masks['gray'].mean(pair.activity), 4.0)
        self.assertEqual(pair.tissue_masks['white'].mean(pair.activity), 1.0)
        self.assertEqual(pair.tissue_masks['ventricle'].mean(pair.activity), 0.5)
        self.assertEqual(len(pair.tumor_masks), 3)
        for roi in pair.tumor_masks:
            self.assertEqual(roi.mean(pair.activity), 8.0)

    def test_prior_identical_without_tumors(self):
        spec = default_brain_spec(GRID, prior_noise=0.05, seed=3)
        self.assertTrue(np.array_equal(
            make_phantom(spec).prior.values, make_phantom(spec.without_tumors()).prior.values
        ))

    def test_empty_ellipse_list(self):
        with self.assertRaises(ConfigurationError):
            make_phantom(PhantomSpec(GRID, [], {}))

    def test_spec_from_dict_defaults_to_brain_layout(self):
        spec = phantom_spec_from_dict({'tumor_activity': 6.0}, GRID)
        self.assertEqual([e.tissue for e in spec.ellipses], ['gray', 'white', 'ventricle'])
        self.assertTrue(all(t.activity == 6.0 for t in spec.tumors))

    def test_background_rois_lie_in_white_matter(self):
        pair = make_phantom(default_brain_spec(GRID))
        rois = default_background_rois(pair)
        self.assertEqual(len(rois), 11)
        white = pair.tissue_masks['white'].mask
        for roi in rois:
            self.assertFalse(np.any(roi.mask & ~white))


class SimulateCountsTests(SimpleTestCase):

    def setUp(self):
        self.A = build_system_matrix(ImageGrid(16, 16, 2.0), ProjectionGeometry(12, 23, 2.0))
        self.x = make_phantom(default_brain_spec(self.A.grid, include_tumors=False)).activity

    def test_zero_image_without_additive(self):
        with self.assertRaises(ModelInfeasibleError):
            simulate_counts(self.A, Image.zeros(self.A.grid), 0.0, 1e4, seed=0)

    def test_deterministic(self):
        first = simulate_counts(self.A, self.x, 0.1, 1e4, seed=7)
        second = simulate_counts(self.A, self.x, 0.1, 1e4, seed=7)
        np.testing.assert_array_equal(first.counts, second.counts)

    def test_expected_total_and_scale(self):
        sino = simulate_counts(self.A, self.x, 0.2, 1e4, seed=0)
        expected = sino.activity_scale * self.A.project(self.x) + sino.additive
        self.assertAlmostEqual(expected.sum(), 1e4, delta=1e-6)
        self.assertAlmostEqual(sino.additive.sum(), 2e3, delta=1e-9)

    def test_fixed_activity_scale(self):
        sino = simulate_counts(self.A, self.x, 0.1, 1e4, seed=0, activity_scale=0.5)
        self.assertEqual(sino.activity_scale, 0.5)
        self.assertAlmostEqual(sino.additive.sum(), 1e3, delta=1e-9)
        with self.assertRaises(ConfigurationError):
            simulate_counts(self.A, self.x, 0.1, 1e4, seed=0, activity_scale=0.0)

    def test_average_total_within_three_standard_errors(self):
        totals = [simulate_counts(self.A, self.x, 0.1, 5e4, seed=s).counts.sum() for s in range(20)]
        standard_error = np.sqrt(5e4 / 20)
        self.assertLess(abs(np.mean(totals) - 5e4), 3 * standard_error)

    def test_poisson_moments(self):
        n = 100_000
        grid = ImageGrid(n, 1, 1.0)
        identity = BlurOperator(grid, [[1.0]])
        counts = simulate_counts(identity, Image.full(grid, 1.0), 0.0, 5.0 * n, seed=11).counts
        mean_sigma = np.sqrt(5.0 / n)
        var_sigma = np.sqrt((5.0 + 2 * 25.0) / n)
        self.assertLess(abs(counts.mean() - 5.0), 5 * mean_sigma)
        self.assertLess(abs(counts.var(ddof=1) - 5.0), 5 * var_sigma)

    def test_parameter_checks(self):
        with self.assertRaises(ConfigurationError):
            simulate_counts(self.A, self.x, 1.0, 1e4, seed=0)
        with self.assertRaises(ConfigurationError):
            simulate_counts(self.A, self.x, 0.1, 0.0, seed=0)


class ThinCountsTests(SimpleTestCase):

    def setUp(self):
        self.geometry = ProjectionGeometry(4, 25, 1.0)
        counts = np.random.default_rng(0).poisson(40, self.geometry.n_measurements)
        self.y = Sinogram(self.geometry, counts, np.full(self.geometry.n_measurements, 2.0))

    def test_ratio_one_is_identity(self):
        for realization in thin_counts(self.y, 1.0, 3, seed=0):
            np.testing.assert_array_equal(realization.counts, self.y.counts)
            np.testing.assert_array_equal(realization.additive, self.y.additive)

    def test_binomial_mean(self):
        m = 2000
        y = Sinogram(None, np.full(m, 8e5))
        realization = thin_counts(y, 0.125, 1, seed=4)[0]
        sigma = np.sqrt(8e5 * 0.125 * 0.875 / m)
        self.assertLess(abs(realization.counts.mean() - 1e5), 5 * sigma)

    def test_reproducible_and_exchangeable(self):
        first = thin_counts(self.y, 0.125, 4, seed=10)
        again = thin_counts(self.y, 0.125, 4, seed=10)
        for a, b in zip(first, again):
            np.testing.assert_array_equal(a.counts, b.counts)
        shifted = thin_counts(self.y, 0.125, 1, seed=12)[0]
        np.testing.assert_array_equal(shifted.counts, first[2].counts)
        np.testing.assert_array_equal(first[0].additive, self.y.additive * 0.125)

    def test_rejects_non_integer_counts(self):
        y = Sinogram(self.geometry, np.full(self.geometry.n_measurements, 1.5))
        with self.assertRaises(ConfigurationError):
            thin_counts(y, 0.5, 1, seed=0)

    def test_rejects_bad_ratio(self):
        with self.assertRaises(ConfigurationError):
            thin_counts(self.y, 0.0, 1, seed=0)

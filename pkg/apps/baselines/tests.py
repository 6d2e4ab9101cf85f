import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase
from scipy import sparse

from apps.core.exceptions import ConfigurationError
from apps.imaging.images import Image, ImageGrid
from apps.poisson.em import log_likelihood, mlem_reconstruct
from apps.poisson.filters import gaussian_filter
from apps.projection.geometry import ProjectionGeometry, Sinogram
from apps.projection.operators import build_system_matrix
from .kernel import (
    KernelConfig, KernelSystem, build_kernel_matrix, kernel_em_reconstruct, load_kernel_matrix, save_kernel_matrix,
)
from .nlm import NlmConfig, nlm_guided_filter
from .postfilter import em_filter_reconstruct


def random_image(width, seed=0, height=None):
    grid = ImageGrid(width, height or width, 2.0)
    return Image(grid, np.random.default_rng(seed).random(grid.shape))


def small_problem(seed=0, width=8):
    grid = ImageGrid(width, width, 2.0)
    A = build_system_matrix(grid, ProjectionGeometry(6, 12, 2.0))
    rng = np.random.default_rng(seed)
    truth = Image(grid, rng.uniform(0.5, 2.0, grid.shape))
    y = Sinogram(A.geometry, rng.poisson(A.project(truth) + 0.5).astype(float), np.full(A.n_measurements, 0.5))
    return A, y, truth


def reflect_patches(values, radius):
    padded = np.pad(values, radius, mode='reflect')
    size = 2 * radius + 1
    height, width = values.shape
    return np.array([
        padded[r:r + size, c:c + size].reshape(-1) for r in range(height) for c in range(width)
    ])


class KernelMatrixTests(SimpleTestCase):

    def test_single_neighbour_is_identity(self):
        K = build_kernel_matrix(random_image(8), KernelConfig(neighbors=1))
        np.testing.assert_array_equal(K.toarray(), np.eye(64))

    def test_constant_prior_gives_equal_weights_in_index_order(self):
        prior = Image.full(ImageGrid(10, 10, 1.0), 3.0)
        K = build_kernel_matrix(prior, KernelConfig(neighbors=5))
        row = K.getrow(0)
        np.testing.assert_array_equal(row.indices, [0, 1, 2, 3, 4])
        np.testing.assert_allclose(row.data, 0.2, rtol=1e-15)
        self.assertTrue(all(K.getrow(i).nnz == 5 for i in range(100)))

    def test_matches_brute_force_knn(self):
        prior = random_image(16, seed=3)
        k = 7
        K = build_kernel_matrix(prior, KernelConfig(patch_radius=1, search_radius=16, neighbors=k))

        features = reflect_patches(prior.values, 1)
        n = features.shape[0]
        chosen = []
        for i in range(n):
            d2 = np.array([np.sum((features[i] - features[j]) ** 2) for j in range(n)])
            others = sorted((d2[j], j) for j in range(n) if j != i)
            chosen.append([(i, 0.0)] + [(j, d) for d, j in others[:k - 1]])
        distances = [np.sqrt(d) for row in chosen for _, d in row if d > 0]
        sigma = np.mean(distances)
        expected = np.zeros((n, n))
        for i, row in enumerate(chosen):
            for j, d in row:
                expected[i, j] = np.exp(-d / (2 * sigma ** 2))
            expected[i] /= expected[i].sum()
        np.testing.assert_allclose(K.toarray(), expected, rtol=0, atol=1e-12)

    def test_rows_are_stochastic(self):
        K = build_kernel_matrix(random_image(12, seed=1))
        np.testing.assert_allclose(np.asarray(K.sum(axis=1)).reshape(-1), 1.0, atol=1e-12)

    def test_too_many_neighbours(self):
        with self.assertRaises(ConfigurationError):
            build_kernel_matrix(random_image(2), KernelConfig(neighbors=9, search_radius=1))
        with self.assertRaises(ConfigurationError):
            KernelConfig(neighbors=10, search_radius=1)

    def test_triplet_file(self):
        K = build_kernel_matrix(random_image(6, seed=2), KernelConfig(neighbors=4))
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'kernel.csv'
            save_kernel_matrix(K, path)
            loaded = load_kernel_matrix(path, 36)
        self.assertEqual((K != loaded).nnz, 0)


class KernelEmTests(SimpleTestCase):

    def test_identity_kernel_is_mlem(self):
        A, y, _ = small_problem()
        expected = mlem_reconstruct(y, A, 10)
        out = kernel_em_reconstruct(y, A, sparse.identity(64, format='csr'), 10)
        np.testing.assert_allclose(out.values, expected.values, rtol=1e-12)

    def test_likelihood_non_decreasing(self):
        A, y, truth = small_problem(seed=1)
        K = build_kernel_matrix(truth, KernelConfig(neighbors=9, search_radius=2))
        values = []
        kernel_em_reconstruct(y, A, K, 30, on_iteration=lambda k, x: values.append(log_likelihood(y, x, A)))
        self.assertEqual(len(values), 30)
        for earlier, later in zip(values, values[1:]):
            self.assertGreaterEqual(later, earlier - 1e-9 * abs(earlier))

    def test_constant_coefficients_are_preserved(self):
        A, _, truth = small_problem()
        system = KernelSystem(A, build_kernel_matrix(truth, KernelConfig(neighbors=9, search_radius=2)))
        np.testing.assert_allclose(system.image_of(Image.full(A.grid, 2.5)).values, 2.5, rtol=1e-12)

    def test_operator_adjointness(self):
        A, _, truth = small_problem()
        system = KernelSystem(A, build_kernel_matrix(truth, KernelConfig(neighbors=5, search_radius=2)))
        rng = np.random.default_rng(0)
        x, r = rng.random(64), rng.random(A.n_measurements)
        self.assertAlmostEqual(float(np.dot(system.apply(x), r)), float(np.dot(x, system.adjoint(r))), places=10)


class GuidedNlmTests(SimpleTestCase):

    def test_constant_guide_is_box_average(self):
        noisy = random_image(9, seed=4)
        out = nlm_guided_filter(noisy, Image.full(noisy.grid, 1.0), NlmConfig(window=5))
        v = noisy.values
        expected = np.array([
            [v[max(0, r - 2):r + 3, max(0, c - 2):c + 3].mean() for c in range(9)] for r in range(9)
        ])
        np.testing.assert_allclose(out.values, expected, rtol=1e-12)

    def test_small_strength_keeps_noisy_image(self):
        noisy = random_image(12, seed=5)
        guide = random_image(12, seed=6)
        out = nlm_guided_filter(noisy, guide, NlmConfig(h=1e-3))
        np.testing.assert_allclose(out.values, noisy.values, atol=1e-10)

    def test_matches_double_loop(self):
        noisy = random_image(32, seed=7)
        guide = random_image(32, seed=8)
        config = NlmConfig(window=5, patch=3)
        h = config.strength(guide)
        out = nlm_guided_filter(noisy, guide, config)

        patches = reflect_patches(guide.values, 1).reshape(32, 32, 9)
        expected = np.zeros((32, 32))
        for r in range(32):
            for c in range(32):
                num = den = 0.0
                for rr in range(max(0, r - 2), min(32, r + 3)):
                    for cc in range(max(0, c - 2), min(32, c + 3)):
                        w = np.exp(-np.sum((patches[r, c] - patches[rr, cc]) ** 2) / h ** 2)
                        num += w * noisy.values[rr, cc]
                        den += w
                expected[r, c] = num / den
        self.assertLessEqual(np.max(np.abs(out.values - expected)), 1e-10)

    def test_guide_offset_invariance(self):
        noisy = random_image(16, seed=9)
        guide = random_image(16, seed=10)
        config = NlmConfig(h=0.4)
        shifted = guide.with_values(guide.values + 7.0)
        np.testing.assert_allclose(nlm_guided_filter(noisy, shifted, config).values,
                                   nlm_guided_filter(noisy, guide, config).values, atol=1e-10)

    def test_default_strength_is_half_range(self):
        guide = Image(ImageGrid(2, 1, 1.0), [1.0, 5.0])
        self.assertEqual(NlmConfig().strength(guide), 2.0)

    def test_even_window_rejected(self):
        with self.assertRaises(ConfigurationError):
            NlmConfig(window=4)


class EmFilterTests(SimpleTestCase):

    def test_vanishing_fwhm_is_mlem(self):
        A, y, _ = small_problem()
        np.testing.assert_allclose(em_filter_reconstruct(y, A, 8, 1e-6).values,
                                   mlem_reconstruct(y, A, 8).values, rtol=1e-6)

    def test_composition(self):
        A, y, _ = small_problem(seed=2)
        expected = gaussian_filter(mlem_reconstruct(y, A, 5), 4.0)
        np.testing.assert_array_equal(em_filter_reconstruct(y, A, 5, 4.0).values, expected.values)

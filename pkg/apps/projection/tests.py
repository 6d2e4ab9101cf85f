import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from apps.core.exceptions import ConfigurationError, GeometryError, GridMismatchError, ImageFormatError
from apps.imaging.images import Image, ImageGrid
from .blur import BlurOperator, gaussian_psf
from .geometry import ProjectionGeometry, Sinogram
from .io import load_sinogram, save_sinogram
from .operators import backproject, build_system_matrix, forward_mean, project


def clip_length(x0, x1, y0, y1, point, direction):
    """Length of the line point + lam * direction inside a box (slab method)."""
    lam_lo, lam_hi = -np.inf, np.inf
    for p, d, lo, hi in ((point[0], direction[0], x0, x1), (point[1], direction[1], y0, y1)):
        if abs(d) < 1e-15:
            if p < lo or p > hi:
                return 0.0
            continue
        a, b = (lo - p) / d, (hi - p) / d
        lam_lo, lam_hi = max(lam_lo, min(a, b)), min(lam_hi, max(a, b))
    return max(0.0, lam_hi - lam_lo)


def dense_oracle(grid, geometry):
    dense = np.zeros((geometry.n_measurements, grid.n_pixels))
    d = grid.pixel_size
    for a, phi in enumerate(geometry.angles):
        normal = np.array([np.cos(phi), np.sin(phi)])
        direction = np.array([-np.sin(phi), np.cos(phi)])
        for b, t in enumerate(geometry.offsets):
            for r in range(grid.height):
                for c in range(grid.width):
                    x0 = (c - grid.width / 2) * d
                    y0 = (r - grid.height / 2) * d
                    dense[a * geometry.n_bins + b, r * grid.width + c] = clip_length(
                        x0, x0 + d, y0, y0 + d, t * normal, direction
                    )
    return dense


class GeometryTests(SimpleTestCase):

    def test_degenerate_geometry(self):
        with self.assertRaises(GeometryError):
            ProjectionGeometry(0, 10, 1.0)
        with self.assertRaises(GeometryError):
            ProjectionGeometry(4, 0, 1.0)

    def test_angles_cover_half_turn(self):
        geometry = ProjectionGeometry(4, 3, 1.0)
        np.testing.assert_allclose(geometry.angles, [0, np.pi / 4, np.pi / 2, 3 * np.pi / 4])
        np.testing.assert_allclose(geometry.offsets, [-1.0, 0.0, 1.0])
        self.assertEqual(geometry.n_measurements, 12)

    def test_sinogram_rejects_negative_counts(self):
        with self.assertRaises(ConfigurationError):
            Sinogram(ProjectionGeometry(1, 2, 1.0), [1.0, -1.0])


class SystemMatrixTests(SimpleTestCase):

    def test_horizontal_ray_through_one_row(self):
        grid = ImageGrid(4, 4, 1.0)
        A = build_system_matrix(grid, ProjectionGeometry(2, 4, 1.0))
        # angle index 1 is pi/2: rays run along x at y = t_b
        row = A.to_dense()[1 * 4 + 2].reshape(4, 4)
        np.testing.assert_allclose(row[2], np.ones(4), atol=1e-12)
        self.assertEqual(np.count_nonzero(row[[0, 1, 3]]), 0)
        ones = Image.full(grid, 1.0)
        self.assertAlmostEqual(project(A, ones)[1 * 4 + 2], 4.0, places=12)

    def test_ray_missing_grid_has_empty_row(self):
        grid = ImageGrid(4, 4, 1.0)
        A = build_system_matrix(grid, ProjectionGeometry(1, 12, 1.0))
        self.assertEqual(A.matrix[0].nnz, 0)
        self.assertEqual(A.matrix[11].nnz, 0)

    def test_entries_match_dense_clipping_oracle(self):
        grid = ImageGrid(8, 8, 1.0)
        geometry = ProjectionGeometry(12, 16, 0.7)
        A = build_system_matrix(grid, geometry)
        np.testing.assert_allclose(A.to_dense(), dense_oracle(grid, geometry), atol=1e-9, rtol=0)

    def test_project_and_backproject_match_dense(self):
        grid = ImageGrid(8, 8, 1.0)
        A = build_system_matrix(grid, ProjectionGeometry(12, 16, 0.7))
        dense = A.to_dense()
        rng = np.random.default_rng(0)
        x = Image(grid, rng.random(grid.shape))
        r = rng.random(A.n_measurements)
        np.testing.assert_allclose(project(A, x), dense @ x.flat, rtol=1e-10)
        np.testing.assert_allclose(backproject(A, r).flat, dense.T @ r, rtol=1e-10)

    def test_zero_inputs(self):
        grid = ImageGrid(8, 8, 1.0)
        A = build_system_matrix(grid, ProjectionGeometry(6, 12, 1.0))
        self.assertFalse(project(A, Image.zeros(grid)).any())
        self.assertFalse(backproject(A, np.zeros(A.n_measurements)).values.any())

    def test_adjointness_on_random_pairs(self):
        grid = ImageGrid(16, 16, 2.0)
        A = build_system_matrix(grid, ProjectionGeometry(20, 23, 2.0))
        rng = np.random.default_rng(1)
        for _ in range(50):
            x = Image(grid, rng.standard_normal(grid.shape))
            r = rng.standard_normal(A.n_measurements)
            ax = project(A, x)
            lhs = float(ax @ r)
            rhs = float(x.flat @ backproject(A, r).flat)
            bound = 1e-10 * (np.linalg.norm(ax) * np.linalg.norm(r) + 1)
            self.assertLessEqual(abs(lhs - rhs), bound)

    def test_column_sums_equal_backprojected_ones(self):
        grid = ImageGrid(16, 16, 2.0)
        A = build_system_matrix(grid, ProjectionGeometry(10, 23, 2.0))
        np.testing.assert_array_equal(A.column_sums, backproject(A, np.ones(A.n_measurements)).flat)

    def test_nonnegativity_preserved(self):
        grid = ImageGrid(16, 16, 2.0)
        A = build_system_matrix(grid, ProjectionGeometry(10, 23, 2.0))
        rng = np.random.default_rng(2)
        self.assertTrue(np.all(project(A, Image(grid, rng.random(grid.shape))) >= 0))
        self.assertTrue(np.all(backproject(A, rng.random(A.n_measurements)).values >= 0))

    def test_centered_disk_profiles_are_angle_independent(self):
        grid = ImageGrid(128, 128, 0.5)
        geometry = ProjectionGeometry(8, 64, 0.9)
        A = build_system_matrix(grid, geometry)
        xs, ys = grid.pixel_centers()
        disk = Image(grid, (xs ** 2 + ys ** 2 <= 20.0 ** 2).astype(float))
        profiles = project(A, disk).reshape(geometry.n_angles, geometry.n_bins)
        mean_profile = profiles.mean(axis=0)
        scale = np.sqrt(np.mean(mean_profile ** 2))
        for profile in profiles:
            rms = np.sqrt(np.mean((profile - mean_profile) ** 2))
            self.assertLess(rms / scale, 0.01)

    def test_grid_mismatch(self):
        A = build_system_matrix(ImageGrid(4, 4, 1.0), ProjectionGeometry(2, 4, 1.0))
        with self.assertRaises(GridMismatchError):
            project(A, Image.zeros(ImageGrid(5, 4, 1.0)))
        with self.assertRaises(GridMismatchError):
            backproject(A, np.ones(3))


class ForwardMeanTests(SimpleTestCase):

    def setUp(self):
        self.grid = ImageGrid(8, 8, 1.0)
        self.A = build_system_matrix(self.grid, ProjectionGeometry(6, 12, 1.0))

    def test_zero_image_gives_additive(self):
        s = np.full(self.A.n_measurements, 0.3)
        np.testing.assert_array_equal(forward_mean(self.A, Image.zeros(self.grid), s), s)

    def test_zero_additive_gives_projection(self):
        x = Image(self.grid, np.random.default_rng(4).random(self.grid.shape))
        np.testing.assert_array_equal(
            forward_mean(self.A, x, np.zeros(self.A.n_measurements)), project(self.A, x)
        )

    def test_componentwise(self):
        rng = np.random.default_rng(5)
        x = Image(self.grid, rng.random(self.grid.shape))
        s = rng.random(self.A.n_measurements)
        np.testing.assert_allclose(forward_mean(self.A, x, s), self.A.to_dense() @ x.flat + s, rtol=1e-12)

    def test_negative_additive(self):
        s = np.zeros(self.A.n_measurements)
        s[0] = -1.0
        with self.assertRaises(ConfigurationError):
            forward_mean(self.A, Image.zeros(self.grid), s)


class BlurOperatorTests(SimpleTestCase):

    def test_delta_psf_is_identity(self):
        grid = ImageGrid(6, 5, 1.0)
        op = BlurOperator(grid, [[1.0]])
        x = np.random.default_rng(0).random(grid.n_pixels)
        np.testing.assert_array_equal(op.apply(x), x)
        np.testing.assert_array_equal(op.column_sums, np.ones(grid.n_pixels))

    def test_adjointness(self):
        grid = ImageGrid(12, 10, 1.0)
        op = BlurOperator(grid, gaussian_psf(2.0))
        rng = np.random.default_rng(1)
        for _ in range(10):
            x = rng.standard_normal(grid.n_pixels)
            r = rng.standard_normal(grid.n_pixels)
            lhs = op.apply(x) @ r
            rhs = x @ op.adjoint(r)
            self.assertLessEqual(abs(lhs - rhs), 1e-10 * (np.linalg.norm(x) * np.linalg.norm(r) + 1))

    def test_constant_interior_unchanged(self):
        grid = ImageGrid(16, 16, 1.0)
        op = BlurOperator(grid, gaussian_psf(1.5, radius=2))
        blurred = op.apply(np.full(grid.n_pixels, 3.0)).reshape(grid.shape)
        np.testing.assert_allclose(blurred[2:-2, 2:-2], 3.0, rtol=1e-12)

    def test_rejects_unnormalised_psf(self):
        with self.assertRaises(ConfigurationError):
            BlurOperator(ImageGrid(4, 4, 1.0), [[0.5, 0.5, 0.5]])
        with self.assertRaises(ConfigurationError):
            BlurOperator(ImageGrid(4, 4, 1.0), [[0.5, 0.5]])


class SinogramIoTests(SimpleTestCase):

    def test_round_trip_with_additive(self):
        geometry = ProjectionGeometry(3, 4, 2.0)
        rng = np.random.default_rng(0)
        counts = rng.poisson(20, geometry.n_measurements).astype(float)
        sino = Sinogram(geometry, counts, np.full(geometry.n_measurements, 0.5), activity_scale=2.5)
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'y.img'
            save_sinogram(sino, path)
            loaded = load_sinogram(path)
        self.assertEqual(loaded.geometry, geometry)
        np.testing.assert_array_equal(loaded.counts, counts)
        np.testing.assert_array_equal(loaded.additive, sino.additive)
        self.assertEqual(loaded.activity_scale, 2.5)

    def test_round_trip_without_additive(self):
        geometry = ProjectionGeometry(2, 2, 1.0)
        sino = Sinogram(geometry, [1.0, 0.0, 3.0, 7.0])
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'y.img'
            save_sinogram(sino, path)
            self.assertEqual(path.stat().st_size, 16)
            loaded = load_sinogram(path)
        self.assertFalse(loaded.has_additive)
        np.testing.assert_array_equal(loaded.counts, sino.counts)

    def test_additive_keeps_double_precision(self):
        geometry = ProjectionGeometry(2, 3, 1.0)
        additive = np.full(geometry.n_measurements, 0.1) + np.arange(6) * 1e-9
        sino = Sinogram(geometry, np.arange(6, dtype=float), additive)
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'y.sino'
            save_sinogram(sino, path)
            self.assertEqual(path.stat().st_size, 6 * 4 + 6 * 8)
            loaded = load_sinogram(path)
        np.testing.assert_array_equal(loaded.additive, additive)

    def test_truncated_file_is_rejected(self):
        geometry = ProjectionGeometry(2, 2, 1.0)
        sino = Sinogram(geometry, [1.0, 2.0, 3.0, 4.0], np.full(4, 0.5))
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'y.sino'
            save_sinogram(sino, path)
            path.write_bytes(path.read_bytes()[:-8])
            with self.assertRaises(ImageFormatError):
                load_sinogram(path)

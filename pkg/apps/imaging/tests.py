import json
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase
from PIL import Image as PILImage

from apps.core.exceptions import ConfigurationError, GridMismatchError, ImageFormatError
from .images import Image, ImageGrid, RoiMask
from .io import export_png, load_image, load_rois, percentile_window, save_image, save_rois
from .rois import circular_roi


class ImageGridTests(SimpleTestCase):

    def test_rejects_degenerate_grid(self):
        with self.assertRaises(ConfigurationError):
            ImageGrid(0, 4, 1.0)
        with self.assertRaises(ConfigurationError):
            ImageGrid(4, 4, 0.0)

    def test_pixel_centers_are_image_centred(self):
        xs, ys = ImageGrid(4, 2, 2.0).pixel_centers()
        np.testing.assert_allclose(xs[0], [-3.0, -1.0, 1.0, 3.0])
        np.testing.assert_allclose(ys[:, 0], [-1.0, 1.0])

    def test_image_values_are_read_only(self):
        img = Image.zeros(ImageGrid(2, 2, 1.0))
        with self.assertRaises(ValueError):
            img.values[0, 0] = 1.0

    def test_image_rejects_wrong_length_and_non_finite(self):
        grid = ImageGrid(2, 2, 1.0)
        with self.assertRaises(GridMismatchError):
            Image(grid, [1.0, 2.0, 3.0])
        with self.assertRaises(ConfigurationError):
            Image(grid, [1.0, np.nan, 0.0, 0.0])


class ImageIoTests(SimpleTestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def _write_raw(self, name, values, meta):
        path = self.dir / f'{name}.img'
        np.asarray(values, dtype='<f4').tofile(path)
        (self.dir / f'{name}.json').write_text(json.dumps(meta))
        return path

    def test_decodes_raw_bytes(self):
        path = self._write_raw('a', [0, 1, 2, 3], {'width': 2, 'height': 2, 'pixel_size_mm': 1.0})
        img = load_image(path)
        np.testing.assert_array_equal(img.flat, [0.0, 1.0, 2.0, 3.0])

    def test_length_mismatch(self):
        path = self._write_raw('b', [0, 1, 2, 3, 4], {'width': 2, 'height': 3, 'pixel_size_mm': 1.0})
        with self.assertRaises(ImageFormatError):
            load_image(path)

    def test_missing_sidecar(self):
        path = self.dir / 'c.img'
        np.zeros(4, dtype='<f4').tofile(path)
        with self.assertRaises(ImageFormatError):
            load_image(path)

    def test_non_finite_values(self):
        path = self._write_raw('d', [0, np.inf, 2, 3], {'width': 2, 'height': 2, 'pixel_size_mm': 1.0})
        with self.assertRaises(ImageFormatError):
            load_image(path)

    def test_round_trip_is_bit_exact(self):
        rng = np.random.default_rng(3)
        values = rng.random((64, 64)).astype(np.float32).astype(np.float64)
        img = Image(ImageGrid(64, 64, 1.25), values)
        path = self.dir / 'r.img'
        save_image(img, path)
        loaded = load_image(path)
        np.testing.assert_array_equal(loaded.values, img.values)
        self.assertEqual(loaded.grid.pixel_size, 1.25)

    def test_save_rejects_values_beyond_float32(self):
        img = Image(ImageGrid(2, 2, 1.0), [0.0, 1e39, 2.0, 3.0])
        path = self.dir / 'big.img'
        with self.assertRaises(ImageFormatError):
            save_image(img, path)
        self.assertFalse(path.exists())

    def test_zero_round_trip(self):
        img = Image.zeros(ImageGrid(3, 5, 2.0))
        save_image(img, self.dir / 'z.img')
        self.assertFalse(load_image(self.dir / 'z.img').values.any())

    def test_png_window_mapping(self):
        img = Image(ImageGrid(4, 1, 1.0), [-1.0, 0.0, 0.5, 2.0])
        path = self.dir / 'p.png'
        export_png(img, (0.0, 1.0), path)
        with PILImage.open(path) as png:
            self.assertEqual(png.mode, 'L')
            pixels = np.asarray(png)
        np.testing.assert_array_equal(pixels[0], [0, 0, 128, 255])

    def test_png_rejects_empty_window(self):
        with self.assertRaises(ConfigurationError):
            export_png(Image.zeros(ImageGrid(2, 2, 1.0)), (1.0, 1.0), self.dir / 'x.png')

    def test_percentile_window_of_flat_image(self):
        lo, hi = percentile_window(Image.full(ImageGrid(3, 3, 1.0), 2.0))
        self.assertLess(lo, hi)

    def test_roi_json_round_trip(self):
        grid = ImageGrid(32, 32, 1.0)
        rois = [circular_roi(grid, (0.0, 0.0), 6.0, 'a'), circular_roi(grid, (5.0, -4.0), 3.0, 'b')]
        save_rois(rois, self.dir / 'rois.json')
        loaded = load_rois(self.dir / 'rois.json', grid)
        self.assertEqual([r.label for r in loaded], ['a', 'b'])
        for original, again in zip(rois, loaded):
            np.testing.assert_array_equal(original.mask, again.mask)


class CircularRoiTests(SimpleTestCase):

    def test_sub_pixel_diameter_selects_one_pixel(self):
        grid = ImageGrid(8, 8, 1.0)
        roi = circular_roi(grid, (0.5, 0.5), 0.5)
        self.assertEqual(roi.n_members, 1)
        self.assertTrue(roi.mask[4, 4])

    def test_large_diameter_covers_grid(self):
        grid = ImageGrid(8, 6, 1.0)
        self.assertEqual(circular_roi(grid, (0.0, 0.0), 100.0).n_members, 48)

    def test_matches_brute_force_pixel_test(self):
        grid = ImageGrid(40, 40, 1.25)
        center = (3.1, -2.7)
        roi = circular_roi(grid, center, 12.5)
        expected = 0
        for r in range(grid.height):
            for c in range(grid.width):
                x = (c + 0.5 - grid.width / 2) * grid.pixel_size
                y = (r + 0.5 - grid.height / 2) * grid.pixel_size
                if (x - center[0]) ** 2 + (y - center[1]) ** 2 <= 6.25 ** 2:
                    expected += 1
        self.assertEqual(roi.n_members, expected)

    def test_outside_grid_is_rejected(self):
        with self.assertRaises(ConfigurationError):
            circular_roi(ImageGrid(4, 4, 1.0), (100.0, 100.0), 2.0)

    def test_non_positive_diameter(self):
        with self.assertRaises(ConfigurationError):
            circular_roi(ImageGrid(4, 4, 1.0), (0.0, 0.0), 0.0)

    def test_intersect_keeps_shared_pixels_and_geometry(self):
        grid = ImageGrid(8, 8, 1.0)
        roi = circular_roi(grid, (0.0, 0.0), 4.0, label='disk')
        left = np.zeros(grid.shape, dtype=bool)
        left[:, :4] = True
        half = roi.intersect(RoiMask(grid, left, 'left'))
        self.assertEqual(half.n_members, roi.n_members // 2)
        self.assertEqual(half.label, 'disk')
        self.assertEqual(half.diameter_mm, 4.0)

    def test_disjoint_intersection_is_rejected(self):
        grid = ImageGrid(8, 8, 1.0)
        with self.assertRaises(ConfigurationError):
            circular_roi(grid, (-2.5, 0.0), 1.0).intersect(circular_roi(grid, (2.5, 0.0), 1.0))

import math
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase, tag

from apps.core.exceptions import ConfigurationError
from apps.core.utils import read_csv
from apps.imaging.images import Image, ImageGrid, RoiMask
from .curves import CurvePoint, curve_sweep, interpolate_at_std, std_overlap, write_curve_csv
from .measures import (
    RealizationSet, background_std, cnr, contrast_recovery, crc, psnr, tumor_difference,
)

GRID = ImageGrid(6, 6, 1.0)


def roi(rows, cols, label=''):
    mask = np.zeros(GRID.shape, dtype=bool)
    mask[rows, cols] = True
    return RoiMask(GRID, mask, label)


TUMOR = roi(slice(0, 2), slice(0, 2), 'tumor')
BACKGROUND = roi(slice(3, 6), slice(3, 6), 'background')
OTHER_BACKGROUND = roi(slice(4, 6), slice(0, 2), 'background_1')


def image_with(tumor_value, background_value, other_value=1.0):
    values = np.full(GRID.shape, 1.0)
    values[:2, :2] = tumor_value
    values[3:, 3:] = background_value
    values[4:, :2] = other_value
    return Image(GRID, values)


def random_set(seed, count=5):
    rng = np.random.default_rng(seed)
    return RealizationSet([Image(GRID, rng.uniform(0.5, 2.0, GRID.shape)) for _ in range(count)])


class ContrastRecoveryTests(SimpleTestCase):

    def test_exact_uptake(self):
        realizations = RealizationSet([image_with(8.0, 1.0)] * 3)
        self.assertEqual(contrast_recovery(realizations, TUMOR, 8.0), 1.0)

    def test_linearity(self):
        realizations = RealizationSet([image_with(4.0, 1.0), image_with(12.0, 1.0)])
        self.assertAlmostEqual(contrast_recovery(realizations, TUMOR, 8.0), 1.0, places=15)

    def test_matches_direct_loop(self):
        realizations = random_set(0)
        expected = 0.0
        for image in realizations.images:
            expected += image.values[:2, :2].sum() / 4 / 3.0
        expected /= len(realizations)
        self.assertAlmostEqual(contrast_recovery(realizations, TUMOR, 3.0), expected, delta=1e-12)

    def test_permutation_invariant(self):
        realizations = random_set(1)
        shuffled = realizations.with_images(realizations.images[::-1])
        self.assertAlmostEqual(contrast_recovery(realizations, TUMOR, 2.0),
                               contrast_recovery(shuffled, TUMOR, 2.0), delta=1e-15)

    def test_invalid_truth(self):
        with self.assertRaises(ConfigurationError):
            contrast_recovery(random_set(0), TUMOR, 0.0)


class BackgroundStdTests(SimpleTestCase):

    def test_identical_realizations(self):
        self.assertEqual(background_std(RealizationSet([image_with(8.0, 2.0)] * 4), [BACKGROUND]), 0.0)

    def test_two_point_oracle(self):
        eps = 0.1
        realizations = RealizationSet([image_with(8.0, 2.0 * (1 - eps)), image_with(8.0, 2.0 * (1 + eps))])
        self.assertAlmostEqual(background_std(realizations, [BACKGROUND]), eps * math.sqrt(2), delta=1e-12)

    def test_roi_order_invariant(self):
        realizations = random_set(2)
        self.assertAlmostEqual(background_std(realizations, [BACKGROUND, OTHER_BACKGROUND]),
                               background_std(realizations, [OTHER_BACKGROUND, BACKGROUND]), delta=1e-15)

    def test_needs_two_realizations(self):
        with self.assertRaises(ConfigurationError):
            background_std(random_set(0, count=1), [BACKGROUND])


class CrcTests(SimpleTestCase):

    def test_perfect_reconstruction(self):
        realizations = RealizationSet([image_with(4.0, 1.0)] * 2)
        self.assertAlmostEqual(crc(realizations, TUMOR, BACKGROUND, 4.0, 1.0), 1.0, places=15)

    def test_no_contrast(self):
        realizations = RealizationSet([image_with(2.0, 2.0)] * 2)
        self.assertEqual(crc(realizations, TUMOR, BACKGROUND, 4.0, 1.0), 0.0)

    def test_matches_formula(self):
        realizations = random_set(3)
        expected = np.mean([
            (img.values[:2, :2].mean() / img.values[3:, 3:].mean() - 1) / (4.0 - 1) for img in realizations.images
        ])
        self.assertAlmostEqual(crc(realizations, TUMOR, BACKGROUND, 4.0, 1.0), expected, delta=1e-12)

    def test_degenerate_truth(self):
        with self.assertRaises(ConfigurationError):
            crc(random_set(0), TUMOR, BACKGROUND, 2.0, 2.0)


class CnrTests(SimpleTestCase):

    def test_two_pixel_oracle(self):
        values = np.zeros(GRID.shape)
        values[:2, :2] = 10.0
        values[5, 4], values[5, 5] = 1.0, 3.0
        muscle = roi(5, slice(4, 6), 'muscle')
        self.assertAlmostEqual(cnr(Image(GRID, values), TUMOR, [muscle]), 8 / math.sqrt(2), places=5)

    def test_equal_means(self):
        values = np.zeros(GRID.shape)
        values[5, 4], values[5, 5] = 1.0, 3.0
        values[:2, :2] = 2.0
        self.assertEqual(cnr(Image(GRID, values), TUMOR, [roi(5, slice(4, 6))]), 0.0)

    def test_scale_and_offset_invariance(self):
        image = random_set(4, count=1).images[0]
        muscles = [BACKGROUND, OTHER_BACKGROUND]
        base = cnr(image, TUMOR, muscles)
        self.assertAlmostEqual(cnr(image.with_values(3.0 * image.values), TUMOR, muscles), base, delta=1e-12)
        self.assertAlmostEqual(cnr(image.with_values(image.values + 5.0), TUMOR, muscles), base, delta=1e-10)

    def test_flat_muscle(self):
        with self.assertRaises(ConfigurationError):
            cnr(image_with(4.0, 1.0), TUMOR, [BACKGROUND])


class PsnrAndDifferenceTests(SimpleTestCase):

    def test_identical_images(self):
        image = random_set(5, count=1).images[0]
        self.assertEqual(psnr(image, image), float('inf'))

    def test_known_value(self):
        reference = Image(ImageGrid(2, 1, 1.0), [0.0, 1.0])
        noisy = Image(ImageGrid(2, 1, 1.0), [0.1, 1.1])
        self.assertAlmostEqual(psnr(noisy, reference), 20.0, places=10)

    def test_tumor_difference(self):
        diff = tumor_difference(image_with(8.0, 1.0), image_with(1.0, 1.0))
        self.assertEqual(diff.values[0, 0], 7.0)
        self.assertEqual(diff.values[5, 5], 0.0)


class CurveTests(SimpleTestCase):

    def sets(self):
        return {20: random_set(6), 40: random_set(7)}

    def test_single_checkpoint_equals_direct_calls(self):
        sets = self.sets()
        points = curve_sweep(sets.__getitem__, [20], lambda s: contrast_recovery(s, TUMOR, 2.0),
                             lambda s: background_std(s, [BACKGROUND]), 'mlem', '0')
        self.assertEqual(points, [CurvePoint(20, contrast_recovery(sets[20], TUMOR, 2.0),
                                             background_std(sets[20], [BACKGROUND]), 'mlem', '0')])

    def test_csv_rows(self):
        points = curve_sweep(self.sets().__getitem__, [20, 40], lambda s: 1.0, lambda s: 0.5, 'em-filter', '3')
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'curve.csv'
            write_curve_csv(points, path)
            rows = read_csv(path)
        self.assertEqual(len(rows), 2)
        self.assertEqual(list(rows[0]), ['iteration', 'metric', 'std', 'method', 'seed_set'])
        self.assertEqual(rows[1]['iteration'], '40')

    def test_sweep_matches_recomputation(self):
        sets = self.sets()
        def metric(s):
            return crc(s, TUMOR, BACKGROUND, 4.0, 1.0)

        def std(s):
            return background_std(s, [BACKGROUND, OTHER_BACKGROUND])

        points = curve_sweep(sets.__getitem__, [20, 40], metric, std)
        for point in points:
            self.assertEqual(point.metric, metric(sets[point.iteration]))
            self.assertEqual(point.std, std(sets[point.iteration]))

    def test_empty_checkpoints(self):
        with self.assertRaises(ConfigurationError):
            curve_sweep(self.sets().__getitem__, [], lambda s: 0.0, lambda s: 0.0)

    def test_interpolation(self):
        points = [CurvePoint(20, 0.5, 0.1), CurvePoint(40, 0.7, 0.3), CurvePoint(60, 0.8, 0.5)]
        self.assertAlmostEqual(interpolate_at_std(points, 0.2), 0.6)
        self.assertEqual(std_overlap(points, [CurvePoint(20, 0.1, 0.2), CurvePoint(40, 0.2, 0.9)]), (0.2, 0.5))
        with self.assertRaises(ConfigurationError):
            interpolate_at_std(points, 0.9)


@tag('slow')
class ReconstructionTrendTests(SimpleTestCase):
    """Proposed method against EM + Gaussian filter at matched background noise."""

    def test_admm_beats_em_filter_at_matched_std(self):
        from apps.admm.engine import admm_reconstruct
        from apps.admm.state import AdmmConfig
        from apps.baselines.postfilter import em_filter_reconstruct
        from apps.projection.geometry import ProjectionGeometry
        from apps.projection.operators import build_system_matrix
        from apps.simulation.counts import simulate_counts, thin_counts
        from apps.simulation.phantom import default_background_rois, default_brain_spec, make_phantom

        grid = ImageGrid(64, 64, 2.0)
        pair = make_phantom(default_brain_spec(grid))
        A = build_system_matrix(grid, ProjectionGeometry(96, 91, 2.0))
        backgrounds = default_background_rois(pair)
        gray = pair.tissue_masks['gray']
        white = pair.tissue_masks['white']
        tumor = pair.tumor_masks[0]
        checkpoints = [10, 20, 30, 40]
        config = AdmmConfig(outer_iterations=max(checkpoints), network_iterations=10)

        wins = 0
        for seed_set in range(10):
            full = simulate_counts(A, pair.activity, 0.1, 4e6, seed_set)
            realizations = thin_counts(full, 0.125, 10, 1000 * seed_set)
            scale = realizations[0].activity_scale
            curves = {}
            for method in ('em-filter', 'dip-admm'):
                images = {k: [] for k in checkpoints}

                def keep(k, img):
                    if k in images:
                        images[k].append(img)

                for y in realizations:
                    if method == 'em-filter':
                        em_filter_reconstruct(y, A, max(checkpoints), 6.0, on_iteration=keep)
                    else:
                        admm_reconstruct(y, A, pair.prior, config,
                                         on_iteration=lambda k, state: keep(k, state.reported))
                sets = {k: RealizationSet(v) for k, v in images.items()}
                curves[method] = (
                    curve_sweep(sets.__getitem__, checkpoints,
                                lambda s: crc(s, gray, white, 4.0, 1.0),
                                lambda s: background_std(s, backgrounds), method, str(seed_set)),
                    curve_sweep(sets.__getitem__, checkpoints,
                                lambda s: contrast_recovery(s, tumor, 8.0 * scale),
                                lambda s: background_std(s, backgrounds), method, str(seed_set)),
                )
            lo, hi = std_overlap(curves['em-filter'][0], curves['dip-admm'][0])
            matched = 0.5 * (lo + hi)
            crc_win = interpolate_at_std(curves['dip-admm'][0], matched) > interpolate_at_std(curves['em-filter'][0], matched)
            cr_win = interpolate_at_std(curves['dip-admm'][1], matched) > interpolate_at_std(curves['em-filter'][1], matched)
            wins += crc_win and cr_win
        self.assertGreaterEqual(wins, 8)

import tempfile
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from django.test import SimpleTestCase

from apps.core.exceptions import ConfigurationError, GridMismatchError
from apps.imaging.images import Image, ImageGrid
from .io import load_params, save_params
from .model import NetworkModel, forward, init_params, loss_and_grad, prepare_input
from .network import NetConfig, PersonalizedUNet, bilinear_upsample, conv_layer_shapes, count_params


def random_alpha(width, seed=0):
    grid = ImageGrid(width, width, 2.0)
    return Image(grid, np.random.default_rng(seed).random(grid.shape))


class InitParamsTests(SimpleTestCase):

    def test_same_seed_same_vector(self):
        config = NetConfig()
        np.testing.assert_array_equal(init_params(config, 5).values, init_params(config, 5).values)
        self.assertFalse(np.array_equal(init_params(config, 5).values, init_params(config, 6).values))

    def test_biases_are_zero(self):
        params = init_params(NetConfig(base_channels=8))
        for slot in params.layout:
            if slot.name.endswith('bias'):
                self.assertFalse(params.layer(slot.name).any())

    def test_weight_variance(self):
        config = NetConfig(base_channels=16)
        params = init_params(config, 1)
        checked = 0
        for slot in params.layout:
            if slot.name.endswith('weight') and slot.size >= 10_000:
                fan_in = slot.shape[1] * slot.shape[2] * slot.shape[3]
                target = 2.0 / (fan_in * (1 + config.negative_slope ** 2))
                variance = params.layer(slot.name).var()
                self.assertLess(abs(variance - target) / target, 0.2)
                checked += 1
        self.assertGreater(checked, 0)


class ForwardTests(SimpleTestCase):

    def test_zero_parameters_give_zero_output(self):
        alpha = random_alpha(16)
        config = NetConfig()
        model = NetworkModel(config, alpha, init_params(config).with_values(np.zeros(count_params(config))))
        self.assertFalse(forward(model).values.any())

    def test_output_matches_input_shape(self):
        for width in (64, 96):
            model = NetworkModel(NetConfig(), random_alpha(width))
            self.assertEqual(forward(model).grid.shape, (width, width))

    def test_rejects_indivisible_input(self):
        with self.assertRaises(GridMismatchError):
            NetworkModel(NetConfig(depth=3), random_alpha(30))

    def test_identity_network_scales_input(self):
        config = NetConfig(depth=2, base_channels=1)
        alpha = prepare_input(random_alpha(8, seed=3))
        zero = init_params(config).with_values(np.zeros(count_params(config)))
        values = np.zeros(len(zero))
        for slot in zero.layout:
            if slot.name in ('encoder.0.conv_a.weight', 'encoder.0.conv_b.weight', 'decoder.0.conv_b.weight'):
                values[slot.offset + 4] = 1.0  # centre tap of the 3x3 kernel
            if slot.name == 'head.weight':
                values[slot.offset] = 2.5
        model = NetworkModel(config, alpha, zero.with_values(values))
        np.testing.assert_array_equal(forward(model).values, 2.5 * alpha.values)

    def test_forward_is_deterministic(self):
        model = NetworkModel(NetConfig(), random_alpha(32))
        np.testing.assert_array_equal(model.evaluate(), model.evaluate())

    def test_skip_junction_superposition(self):
        config = NetConfig(depth=3, base_channels=2, negative_slope=1.0)
        model = NetworkModel(config, random_alpha(16))
        without = model.evaluate(skip_scale=0.0)
        once = model.evaluate(skip_scale=1.0)
        twice = model.evaluate(skip_scale=2.0)
        np.testing.assert_allclose(twice, 2 * once - without, rtol=1e-10, atol=1e-12)
        self.assertFalse(np.allclose(once, without))


class LossAndGradTests(SimpleTestCase):

    def test_exact_fit_has_zero_loss_and_gradient(self):
        model = NetworkModel(NetConfig(), random_alpha(16))
        loss, grad = loss_and_grad(model, forward(model))
        self.assertEqual(loss, 0.0)
        self.assertFalse(grad.values.any())

    def test_gradient_matches_finite_differences(self):
        config = NetConfig(depth=3, base_channels=2, seed=4)
        alpha = prepare_input(random_alpha(16, seed=1))
        model = NetworkModel(config, alpha)
        rng = np.random.default_rng(2)
        target = rng.random(alpha.grid.n_pixels)
        theta = model.theta
        _, grad = model.loss_and_grad_flat(theta, target)
        h = 1e-5
        per_layer = -(-200 // len(model.layout))
        for slot in model.layout:
            count = min(per_layer, slot.size)
            for index in slot.offset + rng.choice(slot.size, size=count, replace=False):
                step = np.zeros_like(theta)
                step[index] = h
                plus, _ = model.loss_and_grad_flat(theta + step, target)
                minus, _ = model.loss_and_grad_flat(theta - step, target)
                fd = (plus - minus) / (2 * h)
                self.assertLessEqual(abs(fd - grad[index]), 1e-4 * abs(grad[index]) + 1e-7,
                                     f"{slot.name} entry {index - slot.offset}")

    def test_output_weight_scaling_quadruples_loss(self):
        config = NetConfig()
        model = NetworkModel(config, random_alpha(16))
        zero_target = Image.zeros(model.grid)
        loss, _ = loss_and_grad(model, zero_target)
        values = model.theta
        slot = next(s for s in model.layout if s.name == 'head.weight')
        values[slot.offset:slot.offset + slot.size] *= 2.0
        model.set_theta(values)
        scaled, _ = loss_and_grad(model, zero_target)
        self.assertAlmostEqual(scaled / loss, 4.0, places=10)

    def test_leaky_derivative_at_zero_uses_slope(self):
        x = torch.zeros(3, dtype=torch.float64, requires_grad=True)
        F.leaky_relu(x, 0.1).sum().backward()
        np.testing.assert_allclose(x.grad.numpy(), 0.1)


class BilinearUpsampleTests(SimpleTestCase):

    def test_constant_stays_constant(self):
        np.testing.assert_array_equal(bilinear_upsample(np.full((2, 2), 3.5)), np.full((4, 4), 3.5))

    def test_ramp(self):
        out = bilinear_upsample(np.array([[0.0, 1.0]]))
        np.testing.assert_allclose(out[0], [0.0, 0.25, 0.75, 1.0])

    def test_adjoint_inner_product(self):
        rng = np.random.default_rng(0)
        x = torch.tensor(rng.standard_normal((3, 5, 6)), requires_grad=True)
        r = torch.tensor(rng.standard_normal((3, 10, 12)))
        up = bilinear_upsample(x)
        (adjoint_r,) = torch.autograd.grad(up, x, grad_outputs=r)
        lhs = float((up * r).sum())
        rhs = float((x * adjoint_r).sum())
        self.assertLessEqual(abs(lhs - rhs), 1e-10 * (abs(lhs) + 1))


class CountParamsTests(SimpleTestCase):

    def test_single_convolution(self):
        self.assertEqual(sum(p.numel() for p in torch.nn.Conv2d(1, 8, 3).parameters()), 80)

    def test_matches_hand_count_and_module(self):
        config = NetConfig(depth=3, base_channels=16)
        hand = (
            (9 * 1 * 16 + 16) + (9 * 16 * 16 + 16)
            + (9 * 16 * 32 + 32) + (9 * 32 * 32 + 32)
            + (9 * 32 * 64 + 64) + (9 * 64 * 64 + 64)
            + (9 * 64 * 32 + 32) + (9 * 32 * 32 + 32)
            + (9 * 32 * 16 + 16) + (9 * 16 * 16 + 16)
            + (16 + 1)
        )
        self.assertEqual(count_params(config), hand)
        self.assertEqual(hand, 106465)
        net = PersonalizedUNet(config)
        self.assertEqual(sum(p.numel() for p in net.parameters()), hand)
        names = [name for name, _, _, _ in conv_layer_shapes(config)]
        self.assertEqual([n.rsplit('.', 1)[0] for n, _ in net.named_parameters()][::2], names)

    def test_default_config_is_smaller_than_image(self):
        self.assertLess(count_params(NetConfig()), 96 * 96)

    def test_config_validation(self):
        with self.assertRaises(ConfigurationError):
            NetConfig(depth=1)


class InputAndIoTests(SimpleTestCase):

    def test_prior_input_is_min_max_scaled(self):
        prepared = prepare_input(Image(ImageGrid(2, 2, 1.0), [1.0, 2.0, 3.0, 5.0]))
        np.testing.assert_allclose(prepared.flat, [0.0, 0.25, 0.5, 1.0])
        self.assertFalse(prepare_input(Image.full(ImageGrid(2, 2, 1.0), 4.0)).values.any())

    def test_noise_input_is_seeded(self):
        alpha = random_alpha(8)
        np.testing.assert_array_equal(prepare_input(alpha, 'noise', 3).values,
                                      prepare_input(alpha, 'noise', 3).values)
        with self.assertRaises(ConfigurationError):
            prepare_input(alpha, 'other')

    def test_params_round_trip(self):
        config = NetConfig(base_channels=2)
        params = init_params(config, 9)
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'theta.bin'
            save_params(params, path, config)
            loaded = load_params(path)
        np.testing.assert_array_equal(loaded.values, params.values)
        self.assertEqual(loaded.layout, params.layout)

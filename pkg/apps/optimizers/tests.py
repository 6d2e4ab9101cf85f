import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase, tag

from apps.core.exceptions import ConfigurationError, OptimizerError
from apps.core.utils import read_csv
from apps.imaging.images import ImageGrid
from apps.neuralnet.model import NetworkModel, prepare_input
from apps.neuralnet.network import NetConfig
from apps.simulation.phantom import default_brain_spec, make_phantom
from .first_order import adam_minimize, nag_minimize
from .lbfgs import lbfgs_minimize, two_loop_direction
from .trace import FirstOrderConfig, LbfgsConfig, TrainTrace, normalized_cost, write_trace_csv


def shifted_quadratic(b):
    return lambda x: (0.5 * float(np.dot(x - b, x - b)), x - b)


def quadratic(Q, b):
    def objective(x):
        r = x - b
        return 0.5 * float(r @ Q @ r), Q @ r
    return objective


def random_spd(n, seed, low=0.1, high=10.0):
    rng = np.random.default_rng(seed)
    basis, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return basis @ np.diag(rng.uniform(low, high, n)) @ basis.T


def rosenbrock(x):
    a, b = x
    value = (1 - a) ** 2 + 100 * (b - a * a) ** 2
    grad = np.array([-2 * (1 - a) - 400 * a * (b - a * a), 200 * (b - a * a)])
    return value, grad


def non_increasing(trace):
    losses = [trace.initial_loss] + trace.losses
    return all(later <= earlier for earlier, later in zip(losses, losses[1:]))


class LbfgsTests(SimpleTestCase):

    def test_identity_quadratic_in_one_iteration(self):
        b = np.array([3.0, -1.0, 0.5, 2.0])
        x, trace = lbfgs_minimize(shifted_quadratic(b), np.zeros(4))
        np.testing.assert_allclose(x, b, atol=1e-12)
        self.assertEqual(trace.n_iterations, 1)
        self.assertEqual(trace.status, 'converged')

    def test_rosenbrock(self):
        x, trace = lbfgs_minimize(rosenbrock, [-1.2, 1.0], LbfgsConfig(max_iterations=200, gradient_tolerance=1e-9))
        self.assertLess(np.linalg.norm(x - 1.0), 1e-6)
        self.assertLessEqual(trace.n_iterations, 200)
        self.assertTrue(non_increasing(trace))

    def test_random_quadratics_are_monotone(self):
        for seed in range(10):
            Q = random_spd(20, seed)
            b = np.random.default_rng(seed + 100).standard_normal(20)
            x, trace = lbfgs_minimize(quadratic(Q, b), np.zeros(20), LbfgsConfig(max_iterations=50))
            self.assertTrue(non_increasing(trace), f"seed {seed}")
            np.testing.assert_allclose(x, b, atol=1e-6)

    def test_trace_lengths_agree(self):
        Q = random_spd(6, 1)
        _, trace = lbfgs_minimize(quadratic(Q, np.ones(6)), np.zeros(6), LbfgsConfig(max_iterations=3))
        self.assertEqual(len(trace.losses), len(trace.grad_norms))
        self.assertEqual(len(trace.losses), len(trace.seconds))
        self.assertGreater(trace.evaluations, trace.n_iterations)

    def test_deterministic(self):
        Q = random_spd(10, 2)
        runs = [lbfgs_minimize(quadratic(Q, np.arange(10.0)), np.ones(10), LbfgsConfig(max_iterations=5))
                for _ in range(2)]
        np.testing.assert_array_equal(runs[0][0], runs[1][0])
        self.assertEqual(runs[0][1].losses, runs[1][1].losses)

    def test_two_loop_without_history_is_steepest_descent(self):
        from collections import deque
        g = np.array([1.0, -2.0])
        np.testing.assert_array_equal(two_loop_direction(g, deque()), -g)

    def test_two_loop_inverts_exact_quadratic_pairs(self):
        from collections import deque
        Q = np.diag([2.0, 5.0])
        pairs = deque(maxlen=2)
        for s in (np.array([1.0, 0.0]), np.array([0.0, 1.0])):
            y = Q @ s
            pairs.append((s, y, 1.0 / np.dot(s, y)))
        g = np.array([4.0, 10.0])
        np.testing.assert_allclose(two_loop_direction(g, pairs), -np.linalg.solve(Q, g), rtol=1e-12)

    def test_non_finite_start_is_rejected(self):
        with self.assertRaises(OptimizerError):
            lbfgs_minimize(shifted_quadratic(np.zeros(2)), [np.nan, 0.0])
        with self.assertRaises(OptimizerError):
            lbfgs_minimize(lambda x: (np.inf, x), np.zeros(2))

    def test_wolfe_constants_validated(self):
        with self.assertRaises(ConfigurationError):
            LbfgsConfig(c1=0.9, c2=0.1)
        with self.assertRaises(ConfigurationError):
            LbfgsConfig(memory=0)


class AdamTests(SimpleTestCase):

    def test_first_step_is_sign_of_gradient(self):
        b = np.array([1.0, -2.0, 0.5])
        x, _ = adam_minimize(shifted_quadratic(b), np.zeros(3), FirstOrderConfig(step_size=1e-2, max_iterations=1))
        np.testing.assert_allclose(x, 1e-2 * np.sign(b), atol=1e-9)

    def test_converges_on_quadratic(self):
        b = np.array([1.0, -2.0, 0.5, 3.0, -0.25])
        x, _ = adam_minimize(shifted_quadratic(b), np.zeros(5), FirstOrderConfig(step_size=1e-2, max_iterations=5000))
        self.assertLess(np.max(np.abs(x - b)), 1e-6)

    def test_deterministic(self):
        Q = random_spd(8, 3)
        config = FirstOrderConfig(step_size=1e-2, max_iterations=50)
        first = adam_minimize(quadratic(Q, np.ones(8)), np.zeros(8), config)
        second = adam_minimize(quadratic(Q, np.ones(8)), np.zeros(8), config)
        np.testing.assert_array_equal(first[0], second[0])
        self.assertEqual(first[1].losses, second[1].losses)

    def test_non_finite_objective_raises(self):
        with self.assertRaises(OptimizerError):
            adam_minimize(lambda x: (float('nan'), x), np.zeros(2))


class NagTests(SimpleTestCase):

    def test_zero_momentum_is_gradient_descent(self):
        Q = random_spd(6, 4)
        b = np.arange(6.0)
        objective = quadratic(Q, b)
        x, _ = nag_minimize(objective, np.zeros(6), FirstOrderConfig(step_size=0.05, momentum=0.0, max_iterations=40))
        expected = np.zeros(6)
        for _ in range(40):
            expected = expected - 0.05 * objective(expected)[1]
        np.testing.assert_allclose(x, expected, rtol=0, atol=1e-12)

    def test_faster_than_gradient_descent(self):
        Q = random_spd(10, 5, low=0.01, high=1.0)
        b = np.ones(10)

        def iterations_to(trace, level):
            return next((k for k, loss in enumerate(trace.losses, 1) if loss <= level), np.inf)

        _, nag = nag_minimize(quadratic(Q, b), np.zeros(10), FirstOrderConfig(step_size=1.0, momentum=0.9, max_iterations=3000))
        _, gd = nag_minimize(quadratic(Q, b), np.zeros(10), FirstOrderConfig(step_size=1.0, momentum=0.0, max_iterations=3000))
        self.assertLess(iterations_to(nag, 1e-8), iterations_to(gd, 1e-8))

    def test_momentum_validated(self):
        with self.assertRaises(ConfigurationError):
            FirstOrderConfig(momentum=1.0)


class NormalizedCostTests(SimpleTestCase):

    def test_endpoints(self):
        trace = TrainTrace('adam', 10.0, losses=[10.0, 4.0, 2.0])
        np.testing.assert_allclose(normalized_cost(trace, 2.0, 10.0), [1.0, 0.25, 0.0])

    def test_matches_scalar_formula(self):
        rng = np.random.default_rng(0)
        trace = TrainTrace('nag', 1.0, losses=list(rng.random(30)))
        phi_ref, phi_1 = 0.1, 0.9
        expected = [(phi_ref - loss) / (phi_ref - phi_1) for loss in trace.losses]
        np.testing.assert_allclose(normalized_cost(trace, phi_ref, phi_1), expected, rtol=1e-15)

    def test_degenerate_reference(self):
        with self.assertRaises(ConfigurationError):
            normalized_cost(TrainTrace('adam', 1.0, losses=[1.0]), 1.0, 1.0)

    def test_unknown_status_is_rejected(self):
        trace = TrainTrace('adam', 1.0)
        trace.stop('converged')
        self.assertEqual(trace.status, 'converged')
        with self.assertRaises(OptimizerError):
            trace.stop('diverged')
        with self.assertRaises(OptimizerError):
            TrainTrace('nag', 1.0, status='done')

    def test_trace_csv(self):
        trace = TrainTrace('lbfgs', 5.0, losses=[3.0, 1.0], grad_norms=[2.0, 0.5], seconds=[0.1, 0.2])
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'logs' / 'trace.csv'
            write_trace_csv(trace, path)
            rows = read_csv(path)
        self.assertEqual([row['iteration'] for row in rows], ['0', '1', '2'])
        self.assertEqual(float(rows[2]['loss']), 1.0)


@tag('slow')
class OptimizerComparisonTrendTests(SimpleTestCase):

    def test_lbfgs_beats_nag_on_network_fit(self):
        grid = ImageGrid(64, 64, 4.0)
        pair = make_phantom(default_brain_spec(grid))
        rng = np.random.default_rng(0)
        clean = pair.activity.values / pair.activity.values.max()
        target = (clean + rng.normal(0.0, 0.1, grid.shape)).reshape(-1)
        model = NetworkModel(NetConfig(depth=3), prepare_input(pair.prior))
        objective = model.objective(target)
        theta0 = model.theta

        _, reference = adam_minimize(objective, theta0, FirstOrderConfig(step_size=1e-2, max_iterations=700))
        _, adam = adam_minimize(objective, theta0, FirstOrderConfig(step_size=1e-2, max_iterations=300))
        _, nag = nag_minimize(objective, theta0, FirstOrderConfig(step_size=1e-5, momentum=0.9, max_iterations=300))
        _, lbfgs = lbfgs_minimize(objective, theta0, LbfgsConfig(max_iterations=300))

        phi_ref, phi_1 = reference.losses[-1], reference.losses[0]
        self.assertLess(normalized_cost(lbfgs, phi_ref, phi_1)[-1], normalized_cost(nag, phi_ref, phi_1)[-1])
        self.assertTrue(non_increasing(lbfgs))
        self.assertTrue(np.any(np.diff(adam.losses) > 0))

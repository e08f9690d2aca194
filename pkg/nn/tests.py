"""
Tests for nn app
"""

import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from Hybridsim.exceptions import ShapeError, TrainingDivergedError, WeightFileError
from .services import (
    Q_NETWORK_DIMS,
    AdamState,
    MlpGradients,
    MlpParams,
    adam_step,
    backward,
    clip_gradients,
    forward,
    forward_with_cache,
    init_weights,
    mse_loss,
    sync_target,
)
from .weights import MAGIC, load_weights, save_weights


def scalar_net(*weights):
    return MlpParams([np.array([[w]]) for w in weights], [np.zeros(1) for _ in weights])


class ForwardTestCase(SimpleTestCase):
    """Test the forward pass"""

    def test_zero_network(self):
        """All-zero parameters output zeros"""
        net = MlpParams([np.zeros((6, 8)), np.zeros((8, 4))], [np.zeros(8), np.zeros(4)])
        np.testing.assert_array_equal(forward(net, np.ones(6)), np.zeros(4))

    def test_relu_kill(self):
        """A negative hidden pre-activation is zeroed"""
        self.assertEqual(forward(scalar_net(1.0, 1.0), [-5.0])[0], 0.0)

    def test_hand_composition(self):
        """3 * relu(2 * 2) = 12"""
        self.assertEqual(forward(scalar_net(2.0, 3.0), [2.0])[0], 12.0)

    def test_batch_matches_rows(self):
        """A batch equals row-by-row evaluation"""
        rng = np.random.default_rng(0)
        net = init_weights(Q_NETWORK_DIMS, rng)
        x = rng.normal(size=(5, 6))
        batch = forward(net, x)
        for i in range(5):
            np.testing.assert_allclose(batch[i], forward(net, x[i]))

    def test_shape_mismatch(self):
        """Wrong input width raises"""
        net = init_weights((6, 4), np.random.default_rng(0))
        with self.assertRaises(ShapeError):
            forward(net, np.ones(5))

    def test_output_layer_linear(self):
        """The output layer can go negative"""
        self.assertEqual(forward(scalar_net(1.0, -3.0), [2.0])[0], -6.0)


class BackwardTestCase(SimpleTestCase):
    """Test analytic gradients"""

    def test_zero_upstream(self):
        """Zero upstream gradient gives zero parameter gradients"""
        rng = np.random.default_rng(1)
        net = init_weights((6, 8, 8, 4), rng)
        grads = backward(net, rng.normal(size=6), np.zeros(4))
        for g in grads.parameters():
            self.assertFalse(g.any())

    def test_linear_net(self):
        """d(w * x)/dw = x"""
        grads = backward(scalar_net(2.0), [3.0], [1.0])
        self.assertEqual(grads.weights[0][0, 0], 3.0)
        self.assertEqual(grads.biases[0][0], 1.0)

    def test_finite_differences(self):
        """Backprop agrees with central differences on a random [6,8,8,4] network"""
        rng = np.random.default_rng(2)
        net = init_weights((6, 8, 8, 4), rng)
        for b in net.biases:
            b[:] = rng.normal(0, 0.1, size=b.shape)
        x = rng.normal(size=(3, 6))
        g = rng.normal(size=(3, 4))
        analytic = backward(net, x, g).parameters()
        params = net.parameters()
        h = 1e-5
        worst = 0.0
        for _ in range(100):
            k = int(rng.integers(len(params)))
            idx = tuple(int(rng.integers(n)) for n in params[k].shape)
            original = params[k][idx]
            params[k][idx] = original + h
            up = np.sum(forward(net, x) * g)
            params[k][idx] = original - h
            down = np.sum(forward(net, x) * g)
            params[k][idx] = original
            numeric = (up - down) / (2 * h)
            worst = max(worst, abs(analytic[k][idx] - numeric) / max(abs(analytic[k][idx]) + abs(numeric), 1e-6))
        self.assertLess(worst, 1e-4)

    def test_cache_reuse(self):
        """A cached forward pass yields the same gradients"""
        rng = np.random.default_rng(3)
        net = init_weights((6, 8, 4), rng)
        x, g = rng.normal(size=(2, 6)), rng.normal(size=(2, 4))
        _, cache = forward_with_cache(net, x)
        for a, b in zip(backward(net, x, g).parameters(), backward(net, x, g, cache=cache).parameters()):
            np.testing.assert_array_equal(a, b)


class LossTestCase(SimpleTestCase):
    """Test mean squared error"""

    def test_exact_prediction(self):
        """Perfect predictions cost nothing"""
        loss, grad = mse_loss([1.0, 2.0], [1.0, 2.0])
        self.assertEqual(loss, 0.0)
        self.assertFalse(grad.any())

    def test_single_sample(self):
        """(2 - 0)^2 = 4 with gradient 4"""
        loss, grad = mse_loss([2.0], [0.0], batch_size=1)
        self.assertEqual(loss, 4.0)
        self.assertEqual(grad[0], 4.0)

    def test_batch_of_two(self):
        """(1 + 9) / 2 = 5"""
        loss, _ = mse_loss([1.0, 3.0], [0.0, 0.0])
        self.assertEqual(loss, 5.0)

    def test_shape_mismatch(self):
        """Prediction and target shapes must agree"""
        with self.assertRaises(ShapeError):
            mse_loss([1.0, 2.0], [1.0])


class AdamTestCase(SimpleTestCase):
    """Test the optimizer"""

    def test_zero_gradient(self):
        """No gradient, no movement"""
        net = init_weights((6, 4), np.random.default_rng(0))
        before = net.copy()
        grads = MlpGradients([np.zeros((6, 4))], [np.zeros(4)])
        adam_step(net, grads, AdamState.create(net), 0.1)
        np.testing.assert_array_equal(net.weights[0], before.weights[0])

    def test_first_step(self):
        """The first bias-corrected step moves by lr"""
        net = scalar_net(1.0)
        adam_step(net, MlpGradients([np.array([[1.0]])], [np.zeros(1)]), AdamState.create(net), 0.1)
        self.assertAlmostEqual(net.weights[0][0, 0], 1.0 - 0.1 / (1.0 + 1e-8), places=12)

    def test_quadratic_trace(self):
        """Ten steps on theta^2 match a scalar Adam written out by hand"""
        net = scalar_net(1.0)
        state = AdamState.create(net)
        theta, m, v = 1.0, 0.0, 0.0
        for t in range(1, 11):
            adam_step(net, MlpGradients([np.array([[2.0 * net.weights[0][0, 0]]])], [np.zeros(1)]), state, 0.1)
            g = 2.0 * theta
            m = 0.9 * m + 0.1 * g
            v = 0.999 * v + 0.001 * g * g
            theta -= 0.1 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
            self.assertAlmostEqual(net.weights[0][0, 0], theta, delta=1e-10)
        self.assertEqual(state.t, 10)

    def test_non_finite_gradient(self):
        """NaN gradients abort the update"""
        net = scalar_net(1.0)
        with self.assertRaises(TrainingDivergedError):
            adam_step(net, MlpGradients([np.array([[np.nan]])], [np.zeros(1)]), AdamState.create(net), 0.1)

    def test_memorization(self):
        """A small network fits a fixed random table"""
        rng = np.random.default_rng(0)
        net = init_weights((6, 32, 32, 4), rng)
        x = rng.uniform(size=(16, 6))
        y = rng.uniform(-1, 1, size=(16, 4))
        state = AdamState.create(net)
        first = None
        for _ in range(3000):
            pred, cache = forward_with_cache(net, x)
            loss, grad = mse_loss(pred, y, batch_size=pred.size)
            first = loss if first is None else first
            adam_step(net, backward(net, x, grad, cache=cache), state, 1e-3)
        self.assertLess(loss, first / 100)
        self.assertLess(loss, 1e-3)

    def test_clip_gradients(self):
        """Clipping rescales to the requested global norm"""
        grads = MlpGradients([np.array([[3.0]])], [np.array([4.0])])
        self.assertEqual(clip_gradients(grads, 1.0), 5.0)
        self.assertAlmostEqual(np.sqrt(sum(np.sum(g ** 2) for g in grads.parameters())), 1.0)


class InitAndSyncTestCase(SimpleTestCase):
    """Test initialization and target copies"""

    def test_same_seed(self):
        """Initialization is reproducible"""
        a = init_weights(Q_NETWORK_DIMS, np.random.default_rng(9))
        b = init_weights(Q_NETWORK_DIMS, np.random.default_rng(9))
        for p, q in zip(a.parameters(), b.parameters()):
            np.testing.assert_array_equal(p, q)

    def test_bounds_and_biases(self):
        """He-uniform bounds and zero biases"""
        net = init_weights(Q_NETWORK_DIMS, np.random.default_rng(0))
        for w, b in zip(net.weights, net.biases):
            self.assertLessEqual(np.abs(w).max(), np.sqrt(6.0 / w.shape[0]))
            self.assertFalse(b.any())

    def test_sync(self):
        """After a sync both networks agree and stay independent"""
        rng = np.random.default_rng(0)
        behavior = init_weights((6, 8, 4), rng)
        target = init_weights((6, 8, 4), rng)
        sync_target(behavior, target)
        sync_target(behavior, target)
        x = rng.normal(size=6)
        np.testing.assert_array_equal(forward(behavior, x), forward(target, x))
        behavior.weights[0] += 1.0
        self.assertFalse(np.array_equal(forward(behavior, x), forward(target, x)))

    def test_sync_shape_mismatch(self):
        """Networks of different shapes cannot sync"""
        rng = np.random.default_rng(0)
        with self.assertRaises(ShapeError):
            sync_target(init_weights((6, 8, 4), rng), init_weights((6, 9, 4), rng))


class WeightFileTestCase(SimpleTestCase):
    """Test binary weight files"""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.path = Path(self.tmp.name) / 'weights-agent0.bin'

    def tearDown(self):
        self.tmp.cleanup()

    def test_save_and_load(self):
        """A saved network loads back bit-identical"""
        net = init_weights(Q_NETWORK_DIMS, np.random.default_rng(4))
        save_weights(net, self.path)
        loaded = load_weights(self.path)
        self.assertEqual(loaded.layer_dims, Q_NETWORK_DIMS)
        for p, q in zip(net.parameters(), loaded.parameters()):
            np.testing.assert_array_equal(p, q)

    def test_file_size(self):
        """Header plus float64 parameters"""
        net = init_weights((6, 8, 4), np.random.default_rng(0))
        save_weights(net, self.path)
        n_params = 6 * 8 + 8 + 8 * 4 + 4
        self.assertEqual(self.path.stat().st_size, len(MAGIC) + 4 + 3 * 4 + 8 * n_params)

    def test_missing_file(self):
        """Missing files raise WeightFileError"""
        with self.assertRaises(WeightFileError):
            load_weights(self.path)

    def test_unwritable_path(self):
        """Write failures raise WeightFileError"""
        net = init_weights((6, 8, 4), np.random.default_rng(0))
        with self.assertRaises(WeightFileError):
            save_weights(net, Path(self.tmp.name) / 'missing-dir' / 'weights-agent0.bin')

    def test_bad_magic(self):
        """Foreign files are refused"""
        self.path.write_bytes(b'not a weight file at all')
        with self.assertRaises(WeightFileError):
            load_weights(self.path)

    def test_truncated(self):
        """Truncated files are refused"""
        save_weights(init_weights((6, 8, 4), np.random.default_rng(0)), self.path)
        self.path.write_bytes(self.path.read_bytes()[:-8])
        with self.assertRaises(WeightFileError):
            load_weights(self.path)

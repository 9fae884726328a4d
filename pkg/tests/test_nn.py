import math

import numpy as np
import pytest

from wcgen import nn


def tiny_forward_oracle(x, w1, b1, w2, b2):
    """Straight-line dense-relu-dense reimplementation."""
    h = x @ w1 + b1
    h = np.where(h > 0, h, 0.0)
    return h @ w2 + b2


class TestLayerSpec:
    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            nn.LayerSpec("batchnorm")

    def test_even_kernel_rejected(self):
        with pytest.raises(ValueError):
            nn.conv2d(2, 1, 1)

    def test_round_trip_dict(self):
        spec = nn.conv2d(3, 2, 8)
        assert nn.LayerSpec.from_dict(spec.to_dict()) == spec


class TestComposition:
    def test_valid_chain(self):
        specs = [nn.conv2d(3, 1, 4), nn.relu(), nn.maxpool2(), nn.flatten(),
                 nn.dense(4 * 2 * 2, 10)]
        assert nn.check_composition(specs, (4, 4, 1)) == (10,)

    def test_offending_layer_index_reported(self):
        specs = [nn.dense(8, 16), nn.dense(32, 4)]
        with pytest.raises(nn.ShapeError, match="layer 1"):
            nn.check_composition(specs, (8,))

    def test_odd_pool_input_rejected(self):
        with pytest.raises(nn.ShapeError):
            nn.check_composition([nn.maxpool2()], (3, 4, 1))


class TestInitNetwork:
    def test_same_seed_bit_identical(self):
        specs = [nn.dense(10, 5)]
        a = nn.init_network(specs, (10,), seed=3)
        b = nn.init_network(specs, (10,), seed=3)
        assert np.array_equal(a.weights[0], b.weights[0])
        assert np.array_equal(a.biases[0], b.biases[0])

    def test_zero_sigma(self):
        p = nn.init_network([nn.dense(4, 4)], (4,), seed=0, sigma_init=0.0)
        assert np.array_equal(p.weights[0], np.zeros((4, 4)))

    def test_gaussian_statistics(self):
        sigma = 0.3
        p = nn.init_network([nn.dense(784, 10)], (784,), seed=7, sigma_init=sigma)
        w = p.weights[0].ravel()
        n = w.size
        assert abs(w.mean()) < 4 * sigma / math.sqrt(n)
        assert abs(w.var() - sigma**2) < 0.1 * sigma**2

    def test_snapshot_frozen(self):
        p = nn.init_network([nn.dense(4, 4)], (4,), seed=0)
        assert np.array_equal(p.theta0_weights[0], p.weights[0])
        with pytest.raises(ValueError):
            p.theta0_weights[0][0, 0] = 99.0

    def test_bad_composition_rejected(self):
        with pytest.raises(nn.ShapeError, match="layer 0"):
            nn.init_network([nn.dense(5, 2)], (4,), seed=0)


class TestForward:
    def test_identity_dense(self):
        p = nn.init_network([nn.dense(2, 2)], (2,), seed=0, sigma_init=0.0)
        p.weights[0] = np.eye(2)
        x = np.array([[1.5, -2.0]])
        _, logits = nn.forward(p, x)
        assert np.allclose(logits, x)

    def test_zero_weights_uniform_softmax(self):
        p = nn.init_network([nn.dense(3, 4)], (3,), seed=0, sigma_init=0.0)
        _, logits = nn.forward(p, np.ones((2, 3)))
        assert np.array_equal(logits, np.zeros((2, 4)))
        loss, _ = nn.softmax_cross_entropy(logits, np.array([0, 3]))
        assert loss == pytest.approx(math.log(4))

    def test_matches_straight_line_oracle(self):
        rng = np.random.default_rng(4)
        p = nn.init_network(
            [nn.dense(5, 7), nn.relu(), nn.dense(7, 3)], (5,), seed=1, sigma_init=0.8
        )
        x = rng.standard_normal((6, 5))
        _, logits = nn.forward(p, x)
        oracle = tiny_forward_oracle(
            x, p.weights[0], p.biases[0], p.weights[2], p.biases[2]
        )
        assert np.allclose(logits, oracle, atol=1e-12)

    def test_shape_mismatch_reported(self):
        p = nn.init_network([nn.dense(4, 2)], (4,), seed=0)
        with pytest.raises(nn.ShapeError):
            nn.forward(p, np.ones((1, 5)))

    def test_conv1x1_reduces_to_dense(self):
        rng = np.random.default_rng(6)
        p = nn.init_network([nn.conv2d(1, 1, 3)], (2, 2, 1), seed=2, sigma_init=0.5)
        x = rng.standard_normal((4, 2, 2, 1))
        _, y = nn.forward(p, x)
        dense_w = p.weights[0].reshape(1, 3)
        oracle = (x.reshape(-1, 1) @ dense_w + p.biases[0]).reshape(4, 2, 2, 3)
        assert np.allclose(y, oracle, atol=1e-12)

    def test_maxpool_tie_breaks_first(self):
        p = nn.init_network([nn.maxpool2()], (2, 2, 1), seed=0)
        x = np.full((1, 2, 2, 1), 3.0)
        cache, y = nn.forward(p, x)
        assert y[0, 0, 0, 0] == 3.0
        assert cache[0][1][0, 0, 0, 0] == 0   # first row-major element wins


class TestLossAndGrad:
    def test_confident_correct_low_loss(self):
        logits = np.array([[50.0, 0.0, 0.0]])
        loss, _ = nn.softmax_cross_entropy(logits, np.array([0]))
        assert loss < 1e-12

    def test_gradients_match_finite_differences_dense(self):
        p = nn.init_network(
            [nn.dense(4, 6), nn.tanh(), nn.dense(6, 3)], (4,), seed=5, sigma_init=0.7
        )
        self._check_grads(p, np.random.default_rng(8).standard_normal((5, 4)),
                          np.array([0, 1, 2, 0, 1]))

    def test_gradients_match_finite_differences_conv(self):
        p = nn.init_network(
            [nn.conv2d(3, 1, 2), nn.relu(), nn.maxpool2(), nn.flatten(),
             nn.dense(8, 3)],
            (4, 4, 1), seed=6, sigma_init=0.6,
        )
        self._check_grads(p, np.random.default_rng(9).standard_normal((3, 4, 4, 1)),
                          np.array([2, 0, 1]))

    @staticmethod
    def _check_grads(p, x, y, step=1e-6):
        _, (dw, db) = nn.loss_and_grad(p, x, y)
        for i in p.trainable_indices():
            for arrays, grads in ((p.weights, dw), (p.biases, db)):
                a = arrays[i]
                it = np.nditer(a, flags=["multi_index"])
                for _ in it:
                    idx = it.multi_index
                    orig = a[idx]
                    a[idx] = orig + step
                    lp, _ = nn.loss_and_grad(p, x, y)
                    a[idx] = orig - step
                    lm, _ = nn.loss_and_grad(p, x, y)
                    a[idx] = orig
                    fd = (lp - lm) / (2 * step)
                    assert grads[i][idx] == pytest.approx(fd, rel=1e-4, abs=1e-9)


class TestEvaluate:
    def test_perfect_single_sample(self):
        p = nn.init_network([nn.dense(2, 2)], (2,), seed=0, sigma_init=0.0)
        p.weights[0] = np.array([[100.0, 0.0], [0.0, 100.0]])
        loss, err = nn.evaluate(p, np.array([[1.0, 0.0]]), np.array([0]))
        assert loss == pytest.approx(0.0, abs=1e-12)
        assert err == 0.0

    def test_random_net_near_chance(self):
        classes = 4
        n = 2000
        rng = np.random.default_rng(10)
        x = rng.standard_normal((n, 6))
        y = np.arange(n) % classes
        p = nn.init_network([nn.dense(6, classes)], (6,), seed=11, sigma_init=0.01)
        _, err = nn.evaluate(p, x, y)
        expected = 1 - 1 / classes
        sigma = math.sqrt(expected * (1 - expected) / n)
        assert abs(err - expected) < 4 * sigma

    def test_pure(self):
        p = nn.init_network([nn.dense(3, 2)], (3,), seed=1)
        x = np.random.default_rng(12).standard_normal((10, 3))
        y = np.zeros(10, dtype=int)
        assert nn.evaluate(p, x, y) == nn.evaluate(p, x, y)

    def test_empty_rejected(self):
        p = nn.init_network([nn.dense(3, 2)], (3,), seed=1)
        with pytest.raises(ValueError):
            nn.evaluate(p, np.zeros((0, 3)), np.zeros(0, dtype=int))

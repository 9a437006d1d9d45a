"""Tests for the decoder MLP forward/backward/init."""

import numpy as np
import pytest

from probegrid.errors import ShapeMismatch
from probegrid.mlp import MlpParams, mlp_backward, mlp_forward, mlp_init


def scalar_oracle(params, x):
    """Independent elementwise forward pass (no matmul)."""
    a = list(x)
    last = len(params.weights) - 1
    for li, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = []
        for j in range(w.shape[1]):
            acc = float(b[j])
            for i in range(w.shape[0]):
                acc += a[i] * float(w[i, j])
            z.append(acc if li == last else max(acc, 0.0))
        a = z
    return np.array(a)


def make_params(widths, seed=0, dtype=np.float64):
    return mlp_init(np.random.default_rng(seed), widths, dtype)


class TestForward:
    def test_zero_parameters_give_zero_output(self):
        p = make_params([4, 8, 3])
        for w in p.weights:
            w[:] = 0
        out, _ = mlp_forward(p, np.ones((5, 4)))
        assert np.all(out == 0)

    def test_identity_like_single_layer(self):
        w = np.array([[2.5]])
        b = np.array([0.25])
        p = MlpParams(weights=[w], biases=[b])
        out, _ = mlp_forward(p, np.array([[3.0]]))
        assert out[0, 0] == pytest.approx(2.5 * 3.0 + 0.25)

    def test_matches_scalar_oracle(self):
        p = make_params([6, 16, 16, 3], seed=4)
        rng = np.random.default_rng(5)
        xs = rng.standard_normal((10, 6))
        out, _ = mlp_forward(p, xs)
        for r in range(10):
            np.testing.assert_allclose(out[r], scalar_oracle(p, xs[r]),
                                       rtol=1e-6, atol=1e-9)

    def test_shape_mismatch(self):
        p = make_params([6, 8, 3])
        with pytest.raises(ShapeMismatch):
            mlp_forward(p, np.zeros((4, 5)))


class TestBackward:
    def test_zero_upstream_gives_zero_gradients(self):
        p = make_params([4, 8, 2])
        out, cache = mlp_forward(p, np.random.default_rng(0).standard_normal((3, 4)))
        dx = mlp_backward(p, cache, np.zeros_like(out))
        assert all(np.all(g == 0) for g in p.weight_grads)
        assert all(np.all(g == 0) for g in p.bias_grads)
        assert np.all(dx == 0)

    def test_single_linear_layer_closed_form(self):
        p = MlpParams(weights=[np.array([[1.0, 2.0], [3.0, 4.0]])],
                      biases=[np.zeros(2)])
        y = np.array([[0.5, -1.5]])
        up = np.array([[2.0, -1.0]])
        out, cache = mlp_forward(p, y)
        dx = mlp_backward(p, cache, up)
        # With weights stored (fan_in, fan_out) the weight gradient is the
        # outer product of input and upstream.
        np.testing.assert_allclose(p.weight_grads[0], np.outer(y[0], up[0]))
        np.testing.assert_allclose(p.bias_grads[0], up[0])
        np.testing.assert_allclose(dx, up @ p.weights[0].T)

    @pytest.mark.parametrize("widths", [[4, 8, 3], [32, 64, 64, 3], [2, 16, 1]])
    def test_gradients_match_finite_differences(self, widths):
        p = make_params(widths, seed=7)
        rng = np.random.default_rng(8)
        xs = rng.standard_normal((4, widths[0]))
        r = rng.standard_normal((4, widths[-1]))  # fixed linear functional

        def loss():
            out, _ = mlp_forward(p, xs)
            return float((out * r).sum())

        out, cache = mlp_forward(p, xs)
        mlp_backward(p, cache, r)

        h = 1e-6
        arrays = list(zip(p.weights, p.weight_grads)) + list(zip(p.biases, p.bias_grads))
        for value, grad in arrays:
            flat_v = value.reshape(-1)
            flat_g = grad.reshape(-1)
            idx = np.random.default_rng(9).choice(flat_v.size,
                                                  size=min(40, flat_v.size),
                                                  replace=False)
            for i in idx:
                orig = flat_v[i]
                flat_v[i] = orig + h
                hi = loss()
                flat_v[i] = orig - h
                lo = loss()
                flat_v[i] = orig
                fd = (hi - lo) / (2 * h)
                assert abs(fd - flat_g[i]) <= 1e-5 * max(1.0, abs(fd), abs(flat_g[i]))

    def test_input_gradient_matches_finite_differences(self):
        p = make_params([5, 12, 2], seed=10)
        rng = np.random.default_rng(11)
        xs = rng.standard_normal((3, 5))
        r = rng.standard_normal((3, 2))
        _, cache = mlp_forward(p, xs)
        dx = mlp_backward(p, cache, r)
        h = 1e-6
        for b in range(3):
            for i in range(5):
                xp = xs.copy(); xp[b, i] += h
                xm = xs.copy(); xm[b, i] -= h
                fd = ((mlp_forward(p, xp)[0] * r).sum()
                      - (mlp_forward(p, xm)[0] * r).sum()) / (2 * h)
                assert abs(fd - dx[b, i]) <= 1e-5 * max(1.0, abs(fd))


class TestInit:
    def test_deterministic_given_seed(self):
        a = make_params([8, 64, 3], seed=42)
        b = make_params([8, 64, 3], seed=42)
        for wa, wb in zip(a.weights, b.weights):
            np.testing.assert_array_equal(wa, wb)

    def test_different_seeds_differ(self):
        a = make_params([8, 64, 3], seed=1)
        b = make_params([8, 64, 3], seed=2)
        assert not np.array_equal(a.weights[0], b.weights[0])

    def test_he_uniform_stddev(self):
        p = make_params([64, 64, 3], seed=3)
        std = p.weights[0].std()
        target = np.sqrt(2.0 / 64.0)
        assert abs(std - target) / target < 0.2

    def test_biases_start_at_zero(self):
        p = make_params([8, 16, 3], seed=0)
        assert all(np.all(b == 0) for b in p.biases)

"""Tests for the multiresolution encoding forward/backward passes."""

import math

import numpy as np
import pytest

from probegrid.encoding import encode_backward, encode_forward
from probegrid.errors import DomainViolation, StaleTrace
from probegrid.indexing import LevelMode
from probegrid.model import HyperParams, init_model

PRIMARY = (1, 2654435761, 805459861)
AUX = (1, 3674653429, 2097192037)


def tiny_hyper(**kw):
    base = dict(n_f=16, n_c=8, n_p=4, n_levels=2, n_min=4, n_max=8,
                n_neurons=8, feature_dim=2)
    base.update(kw)
    return HyperParams(**base)


def oracle_encode_point(model, x):
    """Independent scalar re-implementation of the full encoding."""
    hyper = model.hyper
    out = []
    for lv in model.levels:
        res = lv.spec.resolution
        acc = np.zeros(hyper.feature_dim, dtype=np.float64)
        cell = [min(int(math.floor(xi * res)), res - 1) for xi in x]
        t = [xi * res - ci for xi, ci in zip(x, cell)]
        for k in range(1 << hyper.d):
            w = 1.0
            v = []
            for i in range(hyper.d):
                bit = (k >> (hyper.d - 1 - i)) & 1
                v.append(cell[i] + bit)
                w *= t[i] if bit else 1.0 - t[i]
            if lv.spec.mode is LevelMode.DENSE:
                idx = 0
                for vi in reversed(v):
                    idx = idx * (res + 1) + vi
            else:
                h = 0
                for vi, p in zip(v, PRIMARY):
                    h ^= (vi * p) % 2**32
                if lv.probing:
                    h2 = 0
                    for vi, p in zip(v, AUX):
                        h2 ^= (vi * p) % 2**32
                    row = h2 % hyper.n_c
                    idx = (hyper.n_p * h) % hyper.n_f + int(lv.baked.entries[row])
                else:
                    idx = h % hyper.n_f
            acc += w * lv.features.values[idx].astype(np.float64)
        out.append(acc)
    return np.concatenate(out)


class TestEncodeForward:
    def test_zero_codebooks_give_zero_vector(self):
        model = init_model(tiny_hyper(), seed=0)
        for lv in model.levels:
            lv.features.values[:] = 0
        y, _ = encode_forward(model, np.array([[0.3, 0.7], [0.0, 1.0]]))
        assert y.shape == (2, model.hyper.encoded_width)
        assert np.all(y == 0)

    def test_single_level_vertex_returns_feature_row(self):
        # Dense level: resolution 4, 25 vertices fit in n_f=64.
        hyper = tiny_hyper(n_levels=1, n_min=4, n_max=4, n_f=64, n_p=1)
        model = init_model(hyper, seed=1)
        assert model.levels[0].spec.mode is LevelMode.DENSE
        y, _ = encode_forward(model, np.array([[0.5, 0.25]]))
        idx = 2 + 5 * 1  # vertex (2, 1), row-major stride 5
        np.testing.assert_array_equal(y[0], model.levels[0].features.values[idx])

    def test_single_hashed_level_vertex_returns_feature_row(self):
        hyper = tiny_hyper(n_levels=1, n_min=4, n_max=4, n_f=16, n_p=1)
        model = init_model(hyper, seed=1)
        assert model.levels[0].spec.mode is LevelMode.HASHED
        y, _ = encode_forward(model, np.array([[0.25, 0.75]]))
        h = (1 * 1) ^ ((3 * 2654435761) % 2**32)
        np.testing.assert_array_equal(
            y[0], model.levels[0].features.values[h % 16])

    @pytest.mark.parametrize("seed", [0, 3])
    def test_matches_scalar_oracle(self, seed):
        model = init_model(tiny_hyper(), seed=seed, dtype=np.float64)
        rng = np.random.default_rng(seed + 100)
        xs = rng.random((32, 2))
        xs[0] = [0.0, 0.0]
        xs[1] = [1.0, 1.0]
        y, _ = encode_forward(model, xs)
        for r in range(xs.shape[0]):
            np.testing.assert_allclose(y[r], oracle_encode_point(model, xs[r]),
                                       rtol=1e-12, atol=1e-15)

    def test_oracle_agreement_with_dense_and_plain_levels(self):
        # n_f large enough that the coarse level is dense; n_p=1 exercises
        # the plain hashed path on the fine level.
        hyper = tiny_hyper(n_f=64, n_p=1, n_min=4, n_max=32)
        model = init_model(hyper, seed=5, dtype=np.float64)
        assert model.levels[0].spec.mode is LevelMode.DENSE
        assert model.levels[1].spec.mode is LevelMode.HASHED
        xs = np.random.default_rng(6).random((16, 2))
        y, _ = encode_forward(model, xs)
        for r in range(16):
            np.testing.assert_allclose(y[r], oracle_encode_point(model, xs[r]),
                                       rtol=1e-12, atol=1e-15)

    @pytest.mark.parametrize("levels,fdim", [(1, 2), (3, 2), (2, 4)])
    def test_output_width(self, levels, fdim):
        hyper = tiny_hyper(n_levels=levels, feature_dim=fdim,
                           n_min=4, n_max=4 if levels == 1 else 8)
        model = init_model(hyper, seed=0)
        y, _ = encode_forward(model, np.array([[0.4, 0.6]]))
        assert y.shape == (1, levels * fdim)

    @pytest.mark.parametrize("axis", [0, 1])
    def test_piecewise_linear_along_axes_within_shared_cells(self, axis):
        # Multilinear interpolation is affine when restricted to a single
        # axis, so the midpoint equals the average for axis-aligned pairs
        # whose cells agree at every level.
        hyper = tiny_hyper(n_levels=3, n_min=2, n_max=8)
        model = init_model(hyper, seed=2, dtype=np.float64)
        xa = np.array([0.51, 0.51])
        xb = xa.copy()
        xb[axis] = 0.57
        mid = (xa + xb) / 2
        ya, _ = encode_forward(model, np.stack([xa, xb, mid]))
        np.testing.assert_allclose((ya[0] + ya[1]) / 2, ya[2],
                                   rtol=0, atol=1e-6)

    def test_domain_violation(self):
        model = init_model(tiny_hyper(), seed=0)
        with pytest.raises(DomainViolation):
            encode_forward(model, np.array([[1.2, 0.5]]))
        with pytest.raises(DomainViolation):
            encode_forward(model, np.array([[0.5, -0.01]]))


class TestEncodeBackward:
    def test_zero_upstream_changes_nothing(self):
        model = init_model(tiny_hyper(), seed=0)
        y, traces = encode_forward(model, np.array([[0.2, 0.8]]))
        encode_backward(model, traces, np.zeros_like(y))
        for lv in model.levels:
            assert np.all(lv.features.grads == 0)
            if lv.conf is not None:
                assert np.all(lv.conf.grads == 0)

    def test_vertex_point_hits_only_its_probe_range(self):
        hyper = tiny_hyper(n_levels=1, n_min=4, n_max=4)
        model = init_model(hyper, seed=1)
        lv = model.levels[0]
        x = np.array([[0.25, 0.5]])  # exactly vertex (1, 2)
        y, traces = encode_forward(model, x)
        up = np.ones_like(y)
        encode_backward(model, traces, up)
        base = int(traces[0].base[0, 0])  # corner 0 is the vertex itself
        nonzero_rows = np.nonzero(np.any(lv.features.grads != 0, axis=1))[0]
        assert nonzero_rows.size > 0
        assert set(nonzero_rows) <= set(range(base, base + hyper.n_p))

    def test_gradients_match_finite_differences_of_surrogate(self):
        hyper = tiny_hyper()
        model = init_model(hyper, seed=4, dtype=np.float64)
        rng = np.random.default_rng(5)
        xs = rng.random((5, 2))
        r = rng.standard_normal((5, hyper.encoded_width))

        def loss():
            y, _ = encode_forward(model, xs, surrogate=True)
            return float((y * r).sum())

        _, traces = encode_forward(model, xs, surrogate=True)
        model.zero_grads()
        encode_backward(model, traces, r)

        h = 1e-6
        for lv in model.levels:
            arrays = [(lv.features.values, lv.features.grads)]
            if lv.conf is not None:
                arrays.append((lv.conf.values, lv.conf.grads))
            for value, grad in arrays:
                fv, fg = value.reshape(-1), grad.reshape(-1)
                for i in range(fv.size):
                    orig = fv[i]
                    fv[i] = orig + h
                    hi = loss()
                    fv[i] = orig - h
                    lo = loss()
                    fv[i] = orig
                    fd = (hi - lo) / (2 * h)
                    assert abs(fd - fg[i]) <= 1e-4 * max(1e-3, abs(fd), abs(fg[i]))

    def test_stale_trace_detected(self):
        model = init_model(tiny_hyper(), seed=0)
        y, traces = encode_forward(model, np.array([[0.2, 0.8]]))
        model.levels[1].features.values = np.zeros((32, 2), dtype=np.float32)
        model.levels[1].features.grads = np.zeros((32, 2), dtype=np.float32)
        with pytest.raises(StaleTrace):
            encode_backward(model, traces, np.zeros_like(y))

    def test_batched_accumulation_order_independent(self):
        rng = np.random.default_rng(9)
        xs = rng.random((48, 2))
        up = rng.standard_normal((48, tiny_hyper().encoded_width))

        def grads(order):
            model = init_model(tiny_hyper(), seed=6, dtype=np.float64)
            _, traces = encode_forward(model, xs[order])
            encode_backward(model, traces, up[order])
            out = [lv.features.grads.copy() for lv in model.levels]
            out += [lv.conf.grads.copy() for lv in model.levels if lv.conf is not None]
            return out

        for a, b in zip(grads(np.arange(48)), grads(rng.permutation(48))):
            np.testing.assert_allclose(a, b, rtol=1e-5, atol=1e-12)

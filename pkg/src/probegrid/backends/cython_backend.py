"""Thin wrapper exposing the compiled kernels under the backend API."""

import numpy as np

from . import _core

NAME = "cython"

_MAX_FEATURE_DIM = 16  # stack buffer size in the compiled scatter kernel
_MAX_PROBE_RANGE = 256


def _as_primes(primes, d):
    return np.asarray(primes[:d], dtype=np.uint32)


def _check_dims(feats, n_p=1):
    if feats.shape[1] > _MAX_FEATURE_DIM:
        raise ValueError(f"feature dim {feats.shape[1]} beyond compiled limit")
    if n_p > _MAX_PROBE_RANGE:
        raise ValueError(f"probing range {n_p} beyond compiled limit")


def dense_fwd(xs, resolution, feats):
    b, d = xs.shape
    c = 1 << d
    out = np.zeros((b, feats.shape[1]), dtype=xs.dtype)
    idx = np.empty((b, c), dtype=np.int32)
    wgt = np.empty((b, c), dtype=xs.dtype)
    _core.dense_fwd(xs, resolution, feats, out, idx, wgt)
    return out, idx, wgt


def hashed_fwd(xs, resolution, n_f, feats, primary):
    b, d = xs.shape
    c = 1 << d
    out = np.zeros((b, feats.shape[1]), dtype=xs.dtype)
    idx = np.empty((b, c), dtype=np.int32)
    wgt = np.empty((b, c), dtype=xs.dtype)
    _core.hashed_fwd(xs, resolution, np.uint32(n_f - 1), feats,
                     _as_primes(primary, d), out, idx, wgt)
    return out, idx, wgt


def probed_fwd(xs, resolution, n_f, n_c, log2_np, feats, baked, primary, aux):
    b, d = xs.shape
    c = 1 << d
    out = np.zeros((b, feats.shape[1]), dtype=xs.dtype)
    base = np.empty((b, c), dtype=np.int32)
    row = np.empty((b, c), dtype=np.int32)
    wgt = np.empty((b, c), dtype=xs.dtype)
    _core.probed_fwd(xs, resolution, np.uint32(n_f - 1), np.uint32(n_c - 1),
                     log2_np, feats, baked, _as_primes(primary, d),
                     _as_primes(aux, d), out, base, row, wgt)
    return out, base, row, wgt


def indexed_bwd(upstream, idx, weights, gfeat):
    _check_dims(gfeat)
    _core.indexed_bwd(upstream, idx, weights, gfeat)


def dedup_rows(row, n_c):
    return _core.dedup_rows(np.ascontiguousarray(row), n_c)


def probed_bwd(upstream, base, inv, weights, smu, feats, gfeat, gconf_u):
    _check_dims(gfeat, smu.shape[1])
    _core.probed_bwd(upstream, base, inv, weights,
                     np.ascontiguousarray(smu), feats, gfeat, gconf_u)


def adam_rebake_rows(conf, m, v, baked, rows_u, gconf_u, t, lr, beta1, beta2,
                     eps):
    _core.adam_rebake_rows(conf, m, v, baked, rows_u, gconf_u,
                           1.0 - beta1**t, 1.0 - beta2**t, lr, beta1, beta2,
                           eps)


def mlp_infer_rows(xs, weights, biases, out_sigmoid=False):
    a = np.ascontiguousarray(xs)
    n_layers = len(weights)
    for li in range(n_layers):
        out = np.empty((a.shape[0], weights[li].shape[1]), dtype=a.dtype)
        _core.linear_rows(a, weights[li], biases[li], out, li < n_layers - 1)
        a = out
    if out_sigmoid:
        _core.sigmoid_rows(a)
    return a

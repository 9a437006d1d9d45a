"""Multiresolution input encoding: per-level lookups, blending, concat.

The forward pass gathers 2^d corner features per level (probed, plain
hashed, or dense depending on the level), blends them d-linearly and
concatenates the L level outputs.  The backward pass routes interpolation-
weighted upstream slices back into the codebook gradient buffers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import backends
from .backends import numpy_backend
from .errors import DomainViolation, StaleTrace
from .indexing import AUX_PRIMES, PRIMARY_PRIMES, LevelMode
from .model import Model


@dataclass
class LevelTrace:
    kind: str                 # "dense" | "hashed" | "probed"
    weights: np.ndarray       # (B, 2^d)
    idx: np.ndarray = None    # dense/hashed: final feature rows (B, 2^d)
    base: np.ndarray = None   # probed: (n_p * hash) mod n_f
    row: np.ndarray = None    # probed: hash2 mod n_c
    feat_shape: tuple = None
    conf_shape: tuple = None


def _check_domain(xs: np.ndarray, d: int) -> np.ndarray:
    xs = np.ascontiguousarray(xs)
    if xs.ndim != 2 or xs.shape[1] != d:
        raise DomainViolation(f"expected (batch, {d}) coordinates, got {xs.shape}")
    if np.any(xs < 0.0) or np.any(xs > 1.0):
        raise DomainViolation("coordinates outside the unit hypercube")
    return xs


def encode_forward(model: Model, xs: np.ndarray, surrogate: bool = False):
    """Encode a batch of points; returns (features (B, L*F), traces).

    ``surrogate=True`` swaps the argmax probe for the softmax-weighted
    mixture so finite differences of the output match the straight-through
    backward pass (gradient checks only).
    """
    hyper = model.hyper
    xs = _check_domain(xs.astype(model.dtype, copy=False), hyper.d)
    b = xs.shape[0]
    f = hyper.feature_dim
    kern = backends.get()
    y = np.empty((b, hyper.n_levels * f), dtype=model.dtype)
    traces = []
    for lv in model.levels:
        res = lv.spec.resolution
        feats = lv.features.values
        if lv.spec.mode is LevelMode.DENSE:
            out, idx, w = kern.dense_fwd(xs, res, feats)
            tr = LevelTrace(kind="dense", weights=w, idx=idx,
                            feat_shape=feats.shape)
        elif lv.baked is None:
            out, idx, w = kern.hashed_fwd(xs, res, hyper.n_f, feats,
                                          PRIMARY_PRIMES)
            tr = LevelTrace(kind="hashed", weights=w, idx=idx,
                            feat_shape=feats.shape)
        elif surrogate:
            if lv.conf is None:
                raise StaleTrace("surrogate encoding needs confidence tables")
            out, base, row, w = numpy_backend.probed_fwd_surrogate(
                xs, res, hyper.n_f, hyper.n_c, _log2(hyper.n_p), feats,
                lv.conf.values, PRIMARY_PRIMES, AUX_PRIMES)
            tr = LevelTrace(kind="probed", weights=w, base=base, row=row,
                            feat_shape=feats.shape, conf_shape=lv.conf.values.shape)
        else:
            out, base, row, w = kern.probed_fwd(
                xs, res, hyper.n_f, hyper.n_c, _log2(hyper.n_p), feats,
                lv.baked.entries, PRIMARY_PRIMES, AUX_PRIMES)
            tr = LevelTrace(kind="probed", weights=w, base=base, row=row,
                            feat_shape=feats.shape,
                            conf_shape=(lv.conf.values.shape
                                        if lv.conf is not None else None))
        y[:, lv.spec.level * f:(lv.spec.level + 1) * f] = out
        traces.append(tr)
    return y, traces


def level_upstream(model: Model, level: int, upstream: np.ndarray) -> np.ndarray:
    f = model.hyper.feature_dim
    return np.ascontiguousarray(upstream[:, level * f:(level + 1) * f],
                                dtype=model.dtype)


def probed_backward_compact(lv, tr: LevelTrace, up: np.ndarray):
    """Probed-level backward with compact confidence gradients.

    Accumulates feature gradients into the level's dense buffer and returns
    (rows_u, gconf_u): the unique touched confidence rows and their
    gradient rows.  Shared by the public dense-gradient path and the
    trainer's fused update.
    """
    if lv.conf is None:
        raise StaleTrace(
            f"level {lv.spec.level} has no confidence table "
            "(inference-only model)")
    if tr.conf_shape != lv.conf.values.shape:
        raise StaleTrace(
            f"confidence table shape changed on level {lv.spec.level}")
    kern = backends.get()
    rows_u, inv = kern.dedup_rows(tr.row, lv.conf.values.shape[0])
    smu = numpy_backend.softmax_rows(lv.conf.values[rows_u])
    gconf_u = np.zeros_like(smu)
    kern.probed_bwd(up, tr.base, inv, tr.weights, smu,
                    lv.features.values, lv.features.grads, gconf_u)
    return rows_u, gconf_u


def encode_backward(model: Model, traces: list[LevelTrace],
                    upstream: np.ndarray) -> None:
    """Accumulate codebook gradients from an encoded batch."""
    if len(traces) != len(model.levels):
        raise StaleTrace("trace level count does not match the model")
    kern = backends.get()
    for lv, tr in zip(model.levels, traces):
        if tr.feat_shape != lv.features.values.shape:
            raise StaleTrace(f"feature table shape changed on level {lv.spec.level}")
        up = level_upstream(model, lv.spec.level, upstream)
        if tr.kind == "probed":
            rows_u, gconf_u = probed_backward_compact(lv, tr, up)
            lv.conf.grads[rows_u] += gconf_u
        else:
            kern.indexed_bwd(up, tr.idx, tr.weights, lv.features.grads)


def _log2(n: int) -> int:
    return int(n).bit_length() - 1

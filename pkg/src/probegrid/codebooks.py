"""Trainable feature and confidence codebooks with straight-through lookups.

The functions here are the single-vertex reference path: readable, checked
against the spec'd formulas, and used to validate the batched kernels in
:mod:`probegrid.backends`.  Training runs on the batched path.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidHyperparameter, StaleTrace
from .indexing import (
    AUX_PRIMES,
    PRIMARY_PRIMES,
    compose_probed_index,
    spatial_hash,
    validate_probe_shape,
)


@dataclass
class FeatureCodebook:
    """N_f trainable F-dimensional feature vectors plus a gradient buffer."""

    values: np.ndarray
    grads: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.grads is None:
            self.grads = np.zeros_like(self.values)

    @property
    def n_f(self) -> int:
        return self.values.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.values.shape[1]


@dataclass
class ConfidenceCodebook:
    """N_c x N_p confidence table driving the learned probe offsets."""

    values: np.ndarray
    grads: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.grads is None:
            self.grads = np.zeros_like(self.values)

    @property
    def n_c(self) -> int:
        return self.values.shape[0]

    @property
    def n_p(self) -> int:
        return self.values.shape[1]


@dataclass
class BakedIndexCodebook:
    """Per-row argmax probe offsets, one log2(N_p)-bit integer per row."""

    entries: np.ndarray  # (N_c,) uint8

    @property
    def n_c(self) -> int:
        return self.entries.shape[0]


@dataclass
class LookupTrace:
    """Record of one probed lookup, consumed by probe_backward."""

    base: int
    row: int
    probe: int
    softmax: np.ndarray
    feat_shape: tuple
    conf_shape: tuple


def init_feature_codebook(n_f, feature_dim, rng, dtype=np.float32,
                          scale=1e-4) -> FeatureCodebook:
    vals = rng.uniform(-scale, scale, size=(n_f, feature_dim))
    return FeatureCodebook(values=vals.astype(dtype))


def init_confidence_codebook(n_c, n_p, rng, dtype=np.float32,
                             scale=1e-2) -> ConfidenceCodebook:
    # Near-uniform start keeps early softmax weights close to 1/N_p so every
    # probe offset receives gradient.
    vals = rng.uniform(0.0, scale, size=(n_c, n_p))
    return ConfidenceCodebook(values=vals.astype(dtype))


def softmax(x: np.ndarray) -> np.ndarray:
    z = x - np.max(x)
    e = np.exp(z)
    return e / e.sum()


def probe_forward(v, feature_cb: FeatureCodebook, conf_cb: ConfidenceCodebook,
                  primary=PRIMARY_PRIMES, aux=AUX_PRIMES):
    """Probed lookup of a single grid vertex.

    Returns the argmax-probe feature row and the trace needed to distribute
    straight-through gradients.
    """
    n_f, n_p = feature_cb.n_f, conf_cb.n_p
    validate_probe_shape(n_p, n_f)
    h = spatial_hash(v, primary)
    row = spatial_hash(v, aux) % conf_cb.n_c
    confs = conf_cb.values[row]
    probe = int(np.argmax(confs))  # ties resolve to the smallest offset
    base = (n_p * h) % n_f
    trace = LookupTrace(base=base, row=row, probe=probe,
                        softmax=softmax(confs.astype(np.float64)).astype(confs.dtype),
                        feat_shape=feature_cb.values.shape,
                        conf_shape=conf_cb.values.shape)
    return feature_cb.values[base + probe].copy(), trace


def probe_backward(trace: LookupTrace, upstream, feature_cb: FeatureCodebook,
                   conf_cb: ConfidenceCodebook) -> None:
    """Accumulate straight-through gradients for one traced lookup.

    Every feature in the probing range receives the softmax-weighted
    upstream gradient; the confidence row receives the softmax Jacobian
    applied to the per-probe feature/upstream inner products.
    """
    if trace.feat_shape != feature_cb.values.shape or \
            trace.conf_shape != conf_cb.values.shape:
        raise StaleTrace("codebook shapes changed since the forward pass")
    sm = trace.softmax
    n_p = conf_cb.n_p
    upstream = np.asarray(upstream, dtype=feature_cb.values.dtype)
    dots = feature_cb.values[trace.base:trace.base + n_p] @ upstream
    feature_cb.grads[trace.base:trace.base + n_p] += sm[:, None] * upstream
    conf_cb.grads[trace.row] += sm * (dots - float(sm @ dots))


def bake(conf_cb: ConfidenceCodebook) -> BakedIndexCodebook:
    """Freeze per-row argmax probe offsets (ties to the smallest offset)."""
    if conf_cb.n_p > 256:
        raise InvalidHyperparameter("probing range beyond 8-bit baked storage")
    return BakedIndexCodebook(
        entries=np.argmax(conf_cb.values, axis=1).astype(np.uint8))


def infer_lookup(v, feature_cb: FeatureCodebook, baked: BakedIndexCodebook,
                 n_p: int, primary=PRIMARY_PRIMES, aux=AUX_PRIMES):
    """Inference-path lookup through the baked index codebook."""
    h = spatial_hash(v, primary)
    row = spatial_hash(v, aux) % baked.n_c
    idx = compose_probed_index(h, int(baked.entries[row]), n_p, feature_cb.n_f)
    return feature_cb.values[idx].copy()

"""Pure-NumPy implementation of the hot kernels.

This is the reference backend: the compiled core in ``_core.pyx`` mirrors
these semantics.  All functions are batched over B query points.  Cell
coordinates are clamped to resolution-1 so x = 1.0 stays inside the last
cell (the blended value is unchanged; the clamp only renames zero-weight
corners).

Index conventions shared with the compiled backend:
  corner k of a cell has offset bit (d-1-i) of k on axis i;
  hashes are XORs of 32-bit wrapping products with the prime tables;
  probed index = ((n_p * hash) mod n_f) + baked[hash2 mod n_c].
"""

import numpy as np

NAME = "numpy"

_U32 = np.uint64(0xFFFFFFFF)


def _corner_geometry(xs, resolution):
    """Clamped cell corners and blend weights.

    Returns (corners (B, C, d) int64, weights (B, C) in xs.dtype).
    """
    b, d = xs.shape
    scaled = xs * xs.dtype.type(resolution)
    cell = np.floor(scaled)
    np.minimum(cell, xs.dtype.type(resolution - 1), out=cell)
    np.maximum(cell, xs.dtype.type(0), out=cell)
    t = scaled - cell
    cell = cell.astype(np.int64)
    n = 1 << d
    corners = np.empty((b, n, d), dtype=np.int64)
    weights = np.ones((b, n), dtype=xs.dtype)
    for k in range(n):
        for i in range(d):
            c = (k >> (d - 1 - i)) & 1
            corners[:, k, i] = cell[:, i] + c
            weights[:, k] *= t[:, i] if c else (xs.dtype.type(1.0) - t[:, i])
    return corners, weights


def _hash_corners(corners, primes):
    """uint32 spatial hash of an (B, C, d) corner array."""
    v = corners.astype(np.uint64) & _U32
    h = np.zeros(corners.shape[:2], dtype=np.uint64)
    for i in range(corners.shape[2]):
        h ^= (v[:, :, i] * np.uint64(primes[i])) & _U32
    return h


def _blend(weights, corner_feats):
    """Sum of per-corner features weighted by the interpolation weights."""
    return np.einsum("bc,bcf->bf", weights, corner_feats)


def dense_fwd(xs, resolution, feats):
    """Dense-grid level forward: row-major vertex indexing, no hashing."""
    corners, weights = _corner_geometry(xs, resolution)
    stride = resolution + 1
    d = corners.shape[2]
    idx = corners[:, :, d - 1].copy()
    for i in range(d - 2, -1, -1):
        idx *= stride
        idx += corners[:, :, i]
    idx = idx.astype(np.int32)
    out = _blend(weights, feats[idx])
    return out, idx, weights


def hashed_fwd(xs, resolution, n_f, feats, primary):
    """Plain spatial-hash level forward (no probing)."""
    corners, weights = _corner_geometry(xs, resolution)
    h = _hash_corners(corners, primary)
    idx = (h & np.uint64(n_f - 1)).astype(np.int32)
    out = _blend(weights, feats[idx])
    return out, idx, weights


def probed_fwd(xs, resolution, n_f, n_c, log2_np, feats, baked, primary, aux):
    """Probed level forward using the baked per-row argmax offsets."""
    corners, weights = _corner_geometry(xs, resolution)
    h = _hash_corners(corners, primary)
    h2 = _hash_corners(corners, aux)
    base = ((h << np.uint64(log2_np)) & np.uint64(n_f - 1)).astype(np.int32)
    row = (h2 & np.uint64(n_c - 1)).astype(np.int32)
    idx = base + baked[row].astype(np.int32)
    out = _blend(weights, feats[idx])
    return out, base, row, weights


def probed_fwd_surrogate(xs, resolution, n_f, n_c, log2_np, feats, conf,
                         primary, aux):
    """Softmax-weighted variant of probed_fwd.

    Replaces the argmax feature with the softmax-weighted mixture over the
    probing range, so finite differences of this path match the gradients
    accumulated by probed_bwd.  Diagnostic only; never used in training.
    """
    corners, weights = _corner_geometry(xs, resolution)
    h = _hash_corners(corners, primary)
    h2 = _hash_corners(corners, aux)
    base = ((h << np.uint64(log2_np)) & np.uint64(n_f - 1)).astype(np.int32)
    row = (h2 & np.uint64(n_c - 1)).astype(np.int32)
    sm = softmax_rows(conf[row])
    n_p = conf.shape[1]
    probe_idx = base[:, :, None] + np.arange(n_p, dtype=np.int32)
    mixed = np.einsum("bcj,bcjf->bcf", sm, feats[probe_idx])
    out = _blend(weights, mixed)
    return out, base, row, weights


def softmax_rows(c):
    """Softmax along the last axis, in the input dtype.

    Stabilized by subtracting the global maximum: within a row that is a
    constant shift, so the result is the exact row softmax, and one scalar
    reduction is far cheaper than 2^16 short-row reductions.  Underflow
    would need a spread above ~87 between rows, far beyond trained
    confidence values.
    """
    z = c - c.max()
    np.exp(z, out=z)
    if z.ndim == 2:
        sums = z @ np.ones(z.shape[-1], dtype=z.dtype)
        z /= sums[:, None]
    else:
        z /= z.sum(axis=-1, keepdims=True)
    return z


def dedup_rows(row, n_c):
    """Unique touched rows and the compact index of each lookup.

    Returns (rows_u (U,) int32, inv with row = rows_u[inv]).  Order of
    rows_u is backend-defined but deterministic.
    """
    del n_c
    rows_u, inv = np.unique(row, return_inverse=True)
    return rows_u.astype(np.int32), inv.reshape(row.shape).astype(np.int32)


def indexed_bwd(upstream, idx, weights, gfeat):
    """Scatter-accumulate for dense and plain-hash levels."""
    n_f, f = gfeat.shape
    g = weights[:, :, None] * upstream[:, None, :]
    flat = idx.astype(np.int64)[:, :, None] * f + np.arange(f)
    acc = np.bincount(flat.ravel(), weights=g.ravel(), minlength=n_f * f)
    gfeat += acc.reshape(n_f, f).astype(gfeat.dtype)


def probed_bwd(upstream, base, inv, weights, smu, feats, gfeat, gconf_u):
    """Straight-through scatter for probed levels.

    Features in the probing range receive the softmax-weighted upstream
    gradient; confidences receive the softmax-Jacobian term against the
    per-probe feature/upstream inner products.  ``smu`` holds the softmax
    per unique touched row and ``inv`` maps each (point, corner) lookup to
    its row in ``smu``; confidence gradients accumulate into the compact
    ``gconf_u`` of the same layout.
    """
    n_f, f = gfeat.shape
    u, n_p = gconf_u.shape
    sm = smu[inv]                                            # (B, C, Np)
    g = weights[:, :, None] * upstream[:, None, :]           # (B, C, F)
    probe_idx = base.astype(np.int64)[:, :, None] + np.arange(n_p)
    pf = feats[probe_idx]                                    # (B, C, Np, F)
    dots = np.einsum("bcjf,bcf->bcj", pf, g)
    s = np.einsum("bcj,bcj->bc", sm, dots)
    gconf_rows = sm * (dots - s[:, :, None])

    fw = sm[:, :, :, None] * g[:, :, None, :]                # (B, C, Np, F)
    flat_f = (probe_idx[:, :, :, None] * f + np.arange(f)).ravel()
    acc = np.bincount(flat_f, weights=fw.ravel(), minlength=n_f * f)
    gfeat += acc.reshape(n_f, f).astype(gfeat.dtype)

    flat_c = (inv.astype(np.int64)[:, :, None] * n_p + np.arange(n_p)).ravel()
    acc = np.bincount(flat_c, weights=gconf_rows.ravel(), minlength=u * n_p)
    gconf_u += acc.reshape(u, n_p).astype(gconf_u.dtype)


def adam_rebake_rows(conf, m, v, baked, rows_u, gconf_u, t, lr, beta1, beta2,
                     eps):
    """Adam on the touched confidence rows, then re-bake their argmax."""
    dt = conf.dtype.type
    mm = dt(beta1) * m[rows_u] + dt(1 - beta1) * gconf_u
    vv = dt(beta2) * v[rows_u] + dt(1 - beta2) * (gconf_u * gconf_u)
    m[rows_u] = mm
    v[rows_u] = vv
    mhat = mm / dt(1 - beta1**t)
    vhat = vv / dt(1 - beta2**t)
    rows = conf[rows_u] - dt(lr) * mhat / (np.sqrt(vhat) + dt(eps))
    conf[rows_u] = rows
    baked[rows_u] = np.argmax(rows, axis=1).astype(np.uint8)


def mlp_infer_rows(xs, weights, biases, out_sigmoid=False):
    """Row-at-a-time MLP inference.

    Slower than a batched GEMM but guarantees each row's result is
    independent of which other rows share the call, which the random-access
    decode contract relies on.
    """
    n_layers = len(weights)
    out = np.empty((xs.shape[0], weights[-1].shape[1]), dtype=xs.dtype)
    for r in range(xs.shape[0]):
        a = xs[r]
        for li in range(n_layers - 1):
            a = np.maximum(a @ weights[li] + biases[li], 0)
        a = a @ weights[-1] + biases[-1]
        if out_sigmoid:
            a = 1.0 / (1.0 + np.exp(-a))
        out[r] = a
    return out

# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: corner geometry, probed lookups, gradient scatter.

Semantics mirror numpy_backend exactly (clamped cells, corner bit order,
32-bit wrapping hashes).  Scatter loops run in batch order, so gradient
accumulation is deterministic at any thread count.
"""

import numpy as np

from libc.math cimport exp, floor, sqrt, sqrtf

ctypedef fused floating:
    float
    double

cdef inline long _clamp_cell(double scaled, long res) noexcept nogil:
    cdef long cell = <long>floor(scaled)
    if cell > res - 1:
        cell = res - 1
    if cell < 0:
        cell = 0
    return cell


def dense_fwd(floating[:, ::1] xs, long res, floating[:, ::1] feats,
              floating[:, ::1] out, int[:, ::1] idx, floating[:, ::1] wgt):
    cdef Py_ssize_t bsz = xs.shape[0], d = xs.shape[1]
    cdef Py_ssize_t nc = 1 << d, f = feats.shape[1]
    cdef long stride = res + 1
    cdef Py_ssize_t b, k, i, q
    cdef long cell[3]
    cdef floating t[3]
    cdef floating w
    cdef long v, lin, bit
    with nogil:
        for b in range(bsz):
            for i in range(d):
                cell[i] = _clamp_cell(<double>xs[b, i] * res, res)
                t[i] = xs[b, i] * (<floating>res) - <floating>cell[i]
            for k in range(nc):
                w = <floating>1.0
                lin = 0
                for i in range(d):
                    bit = (k >> (d - 1 - i)) & 1
                    v = cell[i] + bit
                    w = w * (t[i] if bit else (<floating>1.0 - t[i]))
                for i in range(d - 1, -1, -1):
                    bit = (k >> (d - 1 - i)) & 1
                    lin = lin * stride + (cell[i] + bit)
                idx[b, k] = <int>lin
                wgt[b, k] = w
                for q in range(f):
                    out[b, q] += w * feats[lin, q]


def hashed_fwd(floating[:, ::1] xs, long res, unsigned int nf_mask,
               floating[:, ::1] feats, unsigned int[::1] primary,
               floating[:, ::1] out, int[:, ::1] idx, floating[:, ::1] wgt):
    cdef Py_ssize_t bsz = xs.shape[0], d = xs.shape[1]
    cdef Py_ssize_t nc = 1 << d, f = feats.shape[1]
    cdef Py_ssize_t b, k, i, q
    cdef long cell[3]
    cdef floating t[3]
    cdef floating w
    cdef unsigned int h
    cdef long bit, lin
    with nogil:
        for b in range(bsz):
            for i in range(d):
                cell[i] = _clamp_cell(<double>xs[b, i] * res, res)
                t[i] = xs[b, i] * (<floating>res) - <floating>cell[i]
            for k in range(nc):
                w = <floating>1.0
                h = 0
                for i in range(d):
                    bit = (k >> (d - 1 - i)) & 1
                    w = w * (t[i] if bit else (<floating>1.0 - t[i]))
                    h = h ^ (<unsigned int>(cell[i] + bit) * primary[i])
                lin = <long>(h & nf_mask)
                idx[b, k] = <int>lin
                wgt[b, k] = w
                for q in range(f):
                    out[b, q] += w * feats[lin, q]


def probed_fwd(floating[:, ::1] xs, long res, unsigned int nf_mask,
               unsigned int nc_mask, int log2_np, floating[:, ::1] feats,
               unsigned char[::1] baked, unsigned int[::1] primary,
               unsigned int[::1] aux, floating[:, ::1] out,
               int[:, ::1] base, int[:, ::1] row, floating[:, ::1] wgt):
    cdef Py_ssize_t bsz = xs.shape[0], d = xs.shape[1]
    cdef Py_ssize_t nc = 1 << d, f = feats.shape[1]
    cdef Py_ssize_t b, k, i, q
    cdef long cell[3]
    cdef floating t[3]
    cdef floating w
    cdef unsigned int h, h2, vu
    cdef long bit, bs, r, lin
    with nogil:
        for b in range(bsz):
            for i in range(d):
                cell[i] = _clamp_cell(<double>xs[b, i] * res, res)
                t[i] = xs[b, i] * (<floating>res) - <floating>cell[i]
            for k in range(nc):
                w = <floating>1.0
                h = 0
                h2 = 0
                for i in range(d):
                    bit = (k >> (d - 1 - i)) & 1
                    w = w * (t[i] if bit else (<floating>1.0 - t[i]))
                    vu = <unsigned int>(cell[i] + bit)
                    h = h ^ (vu * primary[i])
                    h2 = h2 ^ (vu * aux[i])
                bs = <long>((h << log2_np) & nf_mask)
                r = <long>(h2 & nc_mask)
                lin = bs + <long>baked[r]
                base[b, k] = <int>bs
                row[b, k] = <int>r
                wgt[b, k] = w
                for q in range(f):
                    out[b, q] += w * feats[lin, q]


def indexed_bwd(floating[:, ::1] up, int[:, ::1] idx, floating[:, ::1] wgt,
                floating[:, ::1] gfeat):
    cdef Py_ssize_t bsz = up.shape[0], f = up.shape[1], nc = idx.shape[1]
    cdef Py_ssize_t b, k, q
    cdef long lin
    cdef floating w
    with nogil:
        for b in range(bsz):
            for k in range(nc):
                lin = idx[b, k]
                w = wgt[b, k]
                for q in range(f):
                    gfeat[lin, q] += w * up[b, q]


def dedup_rows(int[:, ::1] row, long n_c):
    """First-encounter dedup of touched rows; returns (rows_u, inv)."""
    mark_arr = np.full(n_c, -1, dtype=np.int32)
    rows_arr = np.empty(row.shape[0] * row.shape[1], dtype=np.int32)
    inv_arr = np.empty((row.shape[0], row.shape[1]), dtype=np.int32)
    cdef int[::1] mark = mark_arr
    cdef int[::1] rows_u = rows_arr
    cdef int[:, ::1] inv = inv_arr
    cdef Py_ssize_t bsz = row.shape[0], nk = row.shape[1]
    cdef Py_ssize_t b, k
    cdef int r, u = 0
    with nogil:
        for b in range(bsz):
            for k in range(nk):
                r = row[b, k]
                if mark[r] < 0:
                    mark[r] = u
                    rows_u[u] = r
                    u += 1
                inv[b, k] = mark[r]
    return rows_arr[:u].copy(), inv_arr


def probed_bwd(floating[:, ::1] up, int[:, ::1] base, int[:, ::1] inv,
               floating[:, ::1] wgt, floating[:, ::1] smu,
               floating[:, ::1] feats, floating[:, ::1] gfeat,
               floating[:, ::1] gconf_u):
    cdef Py_ssize_t bsz = up.shape[0], f = up.shape[1]
    cdef Py_ssize_t nc = base.shape[1], n_p = smu.shape[1]
    cdef Py_ssize_t b, k, j, q
    cdef long bs, iv
    cdef floating w, sj, dot, s, g0, g1
    cdef floating g[16]
    cdef floating dots[256]
    cdef floating *fp
    cdef floating *gp
    cdef floating *sp
    cdef floating *cp
    with nogil:
        if f == 2:
            # The image task always runs with two feature channels; flat
            # pointers give the compiler literal strides to vectorize over.
            for b in range(bsz):
                for k in range(nc):
                    bs = base[b, k]
                    iv = inv[b, k]
                    w = wgt[b, k]
                    g0 = w * up[b, 0]
                    g1 = w * up[b, 1]
                    fp = &feats[bs, 0]
                    gp = &gfeat[bs, 0]
                    sp = &smu[iv, 0]
                    cp = &gconf_u[iv, 0]
                    s = <floating>0.0
                    for j in range(n_p):
                        sj = sp[j]
                        dot = fp[2 * j] * g0 + fp[2 * j + 1] * g1
                        gp[2 * j] += sj * g0
                        gp[2 * j + 1] += sj * g1
                        dots[j] = dot
                        s += sj * dot
                    for j in range(n_p):
                        cp[j] += sp[j] * (dots[j] - s)
        else:
            for b in range(bsz):
                for k in range(nc):
                    bs = base[b, k]
                    iv = inv[b, k]
                    w = wgt[b, k]
                    for q in range(f):
                        g[q] = w * up[b, q]
                    s = <floating>0.0
                    for j in range(n_p):
                        sj = smu[iv, j]
                        dot = <floating>0.0
                        for q in range(f):
                            dot += feats[bs + j, q] * g[q]
                            gfeat[bs + j, q] += sj * g[q]
                        dots[j] = dot
                        s += sj * dot
                    for j in range(n_p):
                        gconf_u[iv, j] += smu[iv, j] * (dots[j] - s)


def adam_rebake_rows(floating[:, ::1] conf, floating[:, ::1] m,
                     floating[:, ::1] v, unsigned char[::1] baked,
                     int[::1] rows_u, floating[:, ::1] gconf_u,
                     double corr1, double corr2, double lr, double beta1,
                     double beta2, double eps):
    """Adam on the touched confidence rows, then re-bake their argmax.

    corr1/corr2 are the bias corrections 1 - beta^t for the current step.
    """
    cdef Py_ssize_t u = rows_u.shape[0], n_p = conf.shape[1]
    cdef Py_ssize_t i, j
    cdef long r
    cdef floating g, mm, vv, best, val
    cdef floating b1 = <floating>beta1, b2 = <floating>beta2
    cdef floating nb1 = <floating>(1.0 - beta1), nb2 = <floating>(1.0 - beta2)
    cdef floating ic1 = <floating>(1.0 / corr1), ic2 = <floating>(1.0 / corr2)
    cdef floating flr = <floating>lr, feps = <floating>eps
    cdef unsigned char best_j
    cdef floating *mp
    cdef floating *vp
    cdef floating *cp
    cdef floating *gp
    with nogil:
        for i in range(u):
            r = rows_u[i]
            mp = &m[r, 0]
            vp = &v[r, 0]
            cp = &conf[r, 0]
            gp = &gconf_u[i, 0]
            # Split passes keep each loop branch-free so they vectorize.
            for j in range(n_p):
                g = gp[j]
                mp[j] = b1 * mp[j] + nb1 * g
                vp[j] = b2 * vp[j] + nb2 * (g * g)
            for j in range(n_p):
                mm = mp[j] * ic1
                vv = vp[j] * ic2
                if floating is float:
                    cp[j] = cp[j] - flr * mm / (sqrtf(vv) + feps)
                else:
                    cp[j] = cp[j] - flr * mm / (sqrt(vv) + feps)
            best = cp[0]
            best_j = 0
            for j in range(1, n_p):
                val = cp[j]
                if val > best:
                    best = val
                    best_j = <unsigned char>j
            baked[r] = best_j


def linear_rows(floating[:, ::1] xs, floating[:, ::1] w, floating[::1] bias,
                floating[:, ::1] out, bint relu):
    """Row-wise x @ W + b; each output row touches only its input row."""
    cdef Py_ssize_t bsz = xs.shape[0], fin = w.shape[0], fout = w.shape[1]
    cdef Py_ssize_t b, i, j
    cdef floating acc
    with nogil:
        for b in range(bsz):
            for j in range(fout):
                acc = bias[j]
                for i in range(fin):
                    acc += xs[b, i] * w[i, j]
                if relu and acc < 0:
                    acc = <floating>0.0
                out[b, j] = acc


def sigmoid_rows(floating[:, ::1] xs):
    cdef Py_ssize_t bsz = xs.shape[0], f = xs.shape[1]
    cdef Py_ssize_t b, q
    with nogil:
        for b in range(bsz):
            for q in range(f):
                xs[b, q] = <floating>(1.0 / (1.0 + exp(-<double>xs[b, q])))

# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the hot loops in ``_kernels_py``.

The clocked multi-spike loop runs entirely without the interpreter, calling
BLAS directly for the synaptic products. The causal-set search stops at the
first valid prefix instead of scanning every candidate.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY, isfinite
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()


# --------------------------------------------------------------------------
# multi-spike
# --------------------------------------------------------------------------


cdef void _mm(const double[:, ::1] a, bint ta, const double[:, ::1] b, bint tb, double[:, ::1] c,
              double beta) noexcept nogil:
    """Row-major ``c = op(a) @ op(b) + beta * c`` through column-major dgemm."""
    cdef int m = c.shape[0], n = c.shape[1]
    cdef int k = a.shape[0] if ta else a.shape[1]
    cdef int lda = a.shape[1], ldb = b.shape[1], ldc = n
    cdef char tra = b'T' if tb else b'N'
    cdef char trb = b'T' if ta else b'N'
    cdef double one = 1.0
    if m == 0 or n == 0:
        return
    dgemm(&tra, &trb, &n, &m, &k, &one, <double*>&b[0, 0], &ldb, <double*>&a[0, 0], &lda, &beta,
          &c[0, 0], &ldc)


cdef void _fire(double[:, ::1] x, const double[::1] b, double[:, ::1] u, double[:, ::1] o_out,
                const double[:, ::1] gate, bint gated, double decay, double v_th) noexcept nogil:
    """``x`` holds the synaptic drive on entry and the pre-reset potential on exit."""
    cdef Py_ssize_t B = x.shape[0], n = x.shape[1]
    cdef Py_ssize_t bi, j
    cdef double up, o
    for bi in range(B):
        for j in range(n):
            up = decay * u[bi, j] + (x[bi, j] + b[j])
            o = 1.0 if up >= v_th else 0.0
            if gated:
                o *= gate[bi, j]
            x[bi, j] = up
            o_out[bi, j] = o
            u[bi, j] = up * (1.0 - o)


cdef void _forward3(const double[:, ::1] drive0, const double[:, ::1] w1, const double[::1] b1,
                    const double[:, ::1] w2, const double[::1] b2, const double[::1] zero0,
                    double[:, :, ::1] up0, double[:, :, ::1] sp0, double[:, :, ::1] up1,
                    double[:, :, ::1] sp1, double[:, :, ::1] up2, double[:, :, ::1] sp2,
                    double[:, ::1] u0, double[:, ::1] u1, double[:, ::1] u2,
                    const double[:, ::1] g0, bint gated0, const double[:, ::1] g1, bint gated1,
                    const double[:, ::1] none, double decay, double v_th) noexcept nogil:
    cdef Py_ssize_t t, T = up0.shape[0]
    for t in range(T):
        up0[t, :, :] = drive0
        _fire(up0[t], zero0, u0, sp0[t], g0, gated0, decay, v_th)
        _mm(sp0[t], False, w1, True, up1[t], 0.0)
        _fire(up1[t], b1, u1, sp1[t], g1, gated1, decay, v_th)
        _mm(sp1[t], False, w2, True, up2[t], 0.0)
        _fire(up2[t], b2, u2, sp2[t], none, False, decay, v_th)


def multi_forward(inputs, weights, biases, gates, int T, double decay, double v_th):
    cdef Py_ssize_t n_layers = len(weights)
    cdef Py_ssize_t t, l
    inputs = np.ascontiguousarray(inputs, dtype=np.float64)
    cdef Py_ssize_t B = inputs.shape[0]
    ws = [np.ascontiguousarray(w, dtype=np.float64) for w in weights]
    bs = [np.ascontiguousarray(b, dtype=np.float64) for b in biases]
    dummy = np.zeros((1, 1))
    gs = []
    for l in range(n_layers):
        g = gates[l] if l < n_layers - 1 and l < len(gates) else None
        gs.append(None if g is None else np.ascontiguousarray(np.broadcast_to(g, (B, ws[l].shape[0])), dtype=np.float64))
    u_pre = [np.empty((T, B, w.shape[0])) for w in ws]
    spikes = [np.empty((T, B, w.shape[0])) for w in ws]
    us = [np.zeros((B, w.shape[0])) for w in ws]
    drive0 = np.ascontiguousarray(inputs @ ws[0].T + bs[0])
    zero0 = np.zeros(ws[0].shape[0])
    if n_layers == 3:
        _forward3(drive0, ws[1], bs[1], ws[2], bs[2], zero0, u_pre[0], spikes[0], u_pre[1], spikes[1],
                  u_pre[2], spikes[2], us[0], us[1], us[2],
                  dummy if gs[0] is None else gs[0], gs[0] is not None,
                  dummy if gs[1] is None else gs[1], gs[1] is not None, dummy, decay, v_th)
        return u_pre, spikes
    cdef double[:, :, ::1] up_v
    for t in range(T):
        for l in range(n_layers):
            g = gs[l]
            up_v = u_pre[l]
            if l == 0:
                u_pre[0][t] = drive0
                _fire(up_v[t], zero0, us[0], spikes[0][t], dummy if g is None else g, g is not None,
                      decay, v_th)
            else:
                _mm(spikes[l - 1][t], False, ws[l], True, up_v[t], 0.0)
                _fire(up_v[t], bs[l], us[l], spikes[l][t], dummy if g is None else g, g is not None,
                      decay, v_th)
    return u_pre, spikes


cdef void _delta(const double[:, ::1] g_out, const double[:, ::1] up, const double[:, ::1] o,
                 double[:, ::1] carry, double[:, ::1] delta, double[::1] gb,
                 const double[:, ::1] gate, bint gated, double decay, double v_th, double alpha,
                 double k) noexcept nogil:
    cdef Py_ssize_t B = up.shape[0], n_out = up.shape[1]
    cdef Py_ssize_t bi, j
    cdef double g, x, sg, d
    for bi in range(B):
        for j in range(n_out):
            g = g_out[bi, j]
            if gated:
                g = g * gate[bi, j]
            x = k * (up[bi, j] - v_th)
            sg = alpha / (2.0 * (1.0 + x * x))
            d = g * sg + carry[bi, j] * (1.0 - o[bi, j])
            delta[bi, j] = d
            carry[bi, j] = decay * d
            gb[j] += d


cdef void _backward3(const double[:, ::1] inputs, const double[:, :, ::1] up0, const double[:, :, ::1] sp0,
                     const double[:, :, ::1] up1, const double[:, :, ::1] sp1,
                     const double[:, :, ::1] up2, const double[:, :, ::1] sp2,
                     const double[:, ::1] w1, const double[:, ::1] w2, const double[:, ::1] top,
                     double[:, ::1] c0, double[:, ::1] c1, double[:, ::1] c2,
                     double[:, ::1] d0, double[:, ::1] d1, double[:, ::1] d2,
                     double[:, ::1] gin1, double[:, ::1] gin2,
                     double[:, ::1] gw0, double[::1] gb0, double[:, ::1] gw1, double[::1] gb1,
                     double[:, ::1] gw2, double[::1] gb2,
                     const double[:, ::1] g0, bint gated0, const double[:, ::1] g1, bint gated1,
                     const double[:, ::1] none, double decay, double v_th, double alpha,
                     double k) noexcept nogil:
    cdef Py_ssize_t t, T = up0.shape[0]
    for t in range(T - 1, -1, -1):
        _delta(top, up2[t], sp2[t], c2, d2, gb2, none, False, decay, v_th, alpha, k)
        _mm(d2, True, sp1[t], False, gw2, 1.0)
        _mm(d2, False, w2, False, gin2, 0.0)
        _delta(gin2, up1[t], sp1[t], c1, d1, gb1, g1, gated1, decay, v_th, alpha, k)
        _mm(d1, True, sp0[t], False, gw1, 1.0)
        _mm(d1, False, w1, False, gin1, 0.0)
        _delta(gin1, up0[t], sp0[t], c0, d0, gb0, g0, gated0, decay, v_th, alpha, k)
        _mm(d0, True, inputs, False, gw0, 1.0)


def multi_backward(inputs, weights, u_pre, spikes, gates, grad_counts, double decay, double v_th,
                   double alpha):
    cdef Py_ssize_t n_layers = len(weights)
    cdef Py_ssize_t t, l
    cdef double k = 0.5 * np.pi * alpha
    inputs = np.ascontiguousarray(inputs, dtype=np.float64)
    cdef Py_ssize_t B = inputs.shape[0]
    cdef Py_ssize_t T = u_pre[0].shape[0]
    ws = [np.ascontiguousarray(w, dtype=np.float64) for w in weights]
    dummy = np.zeros((1, 1))
    gs = []
    for l in range(n_layers):
        g = gates[l] if l < n_layers - 1 and l < len(gates) else None
        gs.append(None if g is None else np.ascontiguousarray(np.broadcast_to(g, (B, ws[l].shape[0])), dtype=np.float64))
    gw = [np.zeros_like(w) for w in ws]
    gb = [np.zeros(w.shape[0]) for w in ws]
    carry = [np.zeros((B, w.shape[0])) for w in ws]
    delta = [np.zeros((B, w.shape[0])) for w in ws]
    g_bufs = [np.zeros((B, w.shape[1])) for w in ws]
    top = np.ascontiguousarray(grad_counts, dtype=np.float64)
    ups = [np.ascontiguousarray(u, dtype=np.float64) for u in u_pre]
    sps = [np.ascontiguousarray(o, dtype=np.float64) for o in spikes]
    if n_layers == 3:
        _backward3(inputs, ups[0], sps[0], ups[1], sps[1], ups[2], sps[2], ws[1], ws[2], top,
                   carry[0], carry[1], carry[2], delta[0], delta[1], delta[2], g_bufs[1], g_bufs[2],
                   gw[0], gb[0], gw[1], gb[1], gw[2], gb[2],
                   dummy if gs[0] is None else gs[0], gs[0] is not None,
                   dummy if gs[1] is None else gs[1], gs[1] is not None, dummy, decay, v_th, alpha, k)
        return gw, gb
    for t in range(T - 1, -1, -1):
        g_out = top
        for l in range(n_layers - 1, -1, -1):
            g = gs[l]
            layer_in = inputs if l == 0 else sps[l - 1][t]
            _delta(g_out, ups[l][t], sps[l][t], carry[l], delta[l], gb[l], dummy if g is None else g,
                   g is not None, decay, v_th, alpha, k)
            _mm(delta[l], True, layer_in, False, gw[l], 1.0)
            if l > 0:
                _mm(delta[l], False, ws[l], False, g_bufs[l], 0.0)
                g_out = g_bufs[l]
    return gw, gb


# --------------------------------------------------------------------------
# single-spike
# --------------------------------------------------------------------------


def causal_forward(weights, z_in):
    w_arr = np.ascontiguousarray(weights, dtype=np.float64)
    z_arr = np.ascontiguousarray(z_in, dtype=np.float64)
    cdef const double[:, ::1] w = w_arr
    cdef const double[:, ::1] z = z_arr
    cdef Py_ssize_t B = z.shape[0], n_in = z.shape[1], n_out = w.shape[0]
    order_arr = np.argsort(z_arr, axis=1, kind="stable")
    cdef const cnp.intp_t[:, ::1] order = np.ascontiguousarray(order_arr, dtype=np.intp)
    z_out_arr = np.full((B, n_out), np.inf)
    n_causal_arr = np.zeros((B, n_out), dtype=np.intp)
    cdef double[:, ::1] z_out = z_out_arr
    cdef cnp.intp_t[:, ::1] n_causal = n_causal_arr
    cdef Py_ssize_t bi, j, kk, idx
    cdef double w_cum, s_cum, zk, nxt, denom, cand
    with nogil:
        for bi in range(B):
            for j in range(n_out):
                w_cum = 0.0
                s_cum = 0.0
                for kk in range(n_in):
                    idx = order[bi, kk]
                    zk = z[bi, idx]
                    if not isfinite(zk):
                        break
                    w_cum = w_cum + w[j, idx]
                    s_cum = s_cum + w[j, idx] * zk
                    denom = w_cum - 1.0
                    if denom <= 0.0:
                        continue
                    cand = s_cum / denom
                    nxt = z[bi, order[bi, kk + 1]] if kk + 1 < n_in else INFINITY
                    if cand > zk and cand <= nxt:
                        z_out[bi, j] = cand
                        n_causal[bi, j] = kk + 1
                        break
    return z_out_arr, n_causal_arr, order_arr


def causal_backward(weights, z_in, z_out, n_causal, order, grad_z_out):
    w_arr = np.ascontiguousarray(weights, dtype=np.float64)
    cdef const double[:, ::1] w = w_arr
    cdef const double[:, ::1] z = np.ascontiguousarray(z_in, dtype=np.float64)
    cdef const double[:, ::1] zo = np.ascontiguousarray(z_out, dtype=np.float64)
    cdef const cnp.intp_t[:, ::1] nc = np.ascontiguousarray(n_causal, dtype=np.intp)
    cdef const cnp.intp_t[:, ::1] od = np.ascontiguousarray(order, dtype=np.intp)
    cdef const double[:, ::1] gz = np.ascontiguousarray(grad_z_out, dtype=np.float64)
    cdef Py_ssize_t B = z.shape[0], n_in = z.shape[1], n_out = w.shape[0]
    grad_w_arr = np.zeros((n_out, n_in))
    grad_z_arr = np.zeros((B, n_in))
    cdef double[:, ::1] gw = grad_w_arr
    cdef double[:, ::1] gzi = grad_z_arr
    cdef Py_ssize_t bi, j, kk, idx, m
    cdef double wc, g, zj
    with nogil:
        for bi in range(B):
            for j in range(n_out):
                m = nc[bi, j]
                if m <= 0:
                    continue
                wc = 0.0
                for kk in range(m):
                    wc = wc + w[j, od[bi, kk]]
                g = gz[bi, j] / (wc - 1.0)
                zj = zo[bi, j]
                for kk in range(m):
                    idx = od[bi, kk]
                    gw[j, idx] += g * (z[bi, idx] - zj)
                    gzi[bi, idx] += g * w[j, idx]
    return grad_w_arr, grad_z_arr

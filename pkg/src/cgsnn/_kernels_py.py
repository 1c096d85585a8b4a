"""Pure numpy implementations of the hot loops.

These are the reference kernels; ``_kernels_cy`` mirrors them and must agree
to floating-point round-off.
"""

from __future__ import annotations

import math

import numpy as np

INF_Z = math.inf


# --------------------------------------------------------------------------
# multi-spike
# --------------------------------------------------------------------------


def multi_forward(inputs, weights, biases, gates, T, decay, v_th):
    B = inputs.shape[0]
    n_layers = len(weights)
    u_pre = [np.empty((T, B, w.shape[0])) for w in weights]
    spikes = [np.empty((T, B, w.shape[0])) for w in weights]
    u = [np.zeros((B, w.shape[0])) for w in weights]
    drive0 = inputs @ weights[0].T + biases[0]
    for t in range(T):
        s_in = None
        for l in range(n_layers):
            x = drive0 if l == 0 else s_in @ weights[l].T + biases[l]
            up = decay * u[l] + x
            o = (up >= v_th).astype(float)
            if l < n_layers - 1 and gates[l] is not None:
                o *= gates[l]
            u_pre[l][t] = up
            spikes[l][t] = o
            u[l] = up * (1.0 - o)
            s_in = o
    return u_pre, spikes


def multi_backward(inputs, weights, u_pre, spikes, gates, grad_counts, decay, v_th, alpha):
    n_layers = len(weights)
    T = u_pre[0].shape[0]
    gw = [np.zeros_like(w) for w in weights]
    gb = [np.zeros(w.shape[0]) for w in weights]
    carry = [np.zeros_like(u_pre[l][0]) for l in range(n_layers)]
    k = 0.5 * math.pi * alpha
    for t in range(T - 1, -1, -1):
        g_out = grad_counts
        for l in range(n_layers - 1, -1, -1):
            if l < n_layers - 1 and gates[l] is not None:
                g_out = g_out * gates[l]
            sg = alpha / (2.0 * (1.0 + (k * (u_pre[l][t] - v_th)) ** 2))
            delta = g_out * sg + carry[l] * (1.0 - spikes[l][t])
            carry[l] = decay * delta
            layer_in = inputs if l == 0 else spikes[l - 1][t]
            gw[l] += delta.T @ layer_in
            gb[l] += delta.sum(axis=0)
            if l > 0:
                g_out = delta @ weights[l]
    return gw, gb


# --------------------------------------------------------------------------
# single-spike (z-domain)
# --------------------------------------------------------------------------


def causal_forward(weights, z_in):
    """First-spike z of every output neuron for a batch of input spike z's.

    ``weights`` is ``(n_out, n_in)``, ``z_in`` is ``(B, n_in)`` with ``inf``
    marking silent inputs. Returns ``(z_out, n_causal, order)`` where the causal
    set of output ``j`` on trial ``b`` is ``order[b, :n_causal[b, j]]`` and
    ``z_out`` is ``inf`` (``n_causal == 0``) for neurons that never fire.
    """
    B, n_in = z_in.shape
    n_out = weights.shape[0]
    order = np.argsort(z_in, axis=1, kind="stable")
    z_sorted = np.take_along_axis(z_in, order, axis=1)  # (B, n_in)
    finite = np.isfinite(z_sorted)
    w_sorted = weights[:, order].transpose(1, 0, 2)  # (B, n_out, n_in)
    zs = np.where(finite, z_sorted, 0.0)
    w_cum = np.cumsum(w_sorted, axis=2)
    s_cum = np.cumsum(w_sorted * zs[:, None, :], axis=2)
    denom = w_cum - 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        cand = s_cum / denom
    nxt = np.concatenate([z_sorted[:, 1:], np.full((B, 1), np.inf)], axis=1)
    valid = (
        (denom > 0)
        & finite[:, None, :]
        & (cand > z_sorted[:, None, :])
        & (cand <= nxt[:, None, :])
    )
    any_valid = valid.any(axis=2)
    k = np.argmax(valid, axis=2)
    z_out = np.where(any_valid, np.take_along_axis(cand, k[:, :, None], axis=2)[:, :, 0], np.inf)
    n_causal = np.where(any_valid, k + 1, 0)
    return z_out, n_causal, order


def causal_backward(weights, z_in, z_out, n_causal, order, grad_z_out):
    """Exact gradients through the z-domain relation with fixed causal sets.

    Returns ``(grad_weights, grad_z_in)``.
    """
    B, n_in = z_in.shape
    rank = np.empty_like(order)
    np.put_along_axis(rank, order, np.arange(n_in)[None, :].repeat(B, axis=0), axis=1)
    mask = rank[:, None, :] < n_causal[:, :, None]  # (B, n_out, n_in)
    w_c = np.where(mask, weights[None, :, :], 0.0).sum(axis=2)
    fired = n_causal > 0
    g = np.where(fired, grad_z_out, 0.0) / np.where(fired, w_c - 1.0, 1.0)
    zin = np.where(np.isfinite(z_in), z_in, 0.0)
    zout = np.where(fired, z_out, 0.0)
    gm = np.where(mask, g[:, :, None], 0.0)
    grad_w = np.einsum("bji,bi->ji", gm, zin) - np.einsum("bji,bj->ji", gm, zout)
    grad_z_in = np.einsum("bji,ji->bi", gm, weights)
    return grad_w, grad_z_in

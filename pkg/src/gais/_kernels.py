"""Compiled per-edge loops for the attention layer.

Edges are grouped by receiving node (CSR layout, ``indptr`` over targets).
All loops run sequentially so floating-point summation order is fixed.
"""

import numpy as np
from numba import njit

NEGATIVE_SLOPE = 0.2


@njit(cache=True)
def attention_scores(WH, a, source, indptr):
    """Pre-activation scores and segment-softmax attention, both (E, K)."""
    m, K, o = WH.shape
    E = source.shape[0]
    f = np.zeros((m, K))
    g = np.zeros((m, K))
    for i in range(m):
        for k in range(K):
            sf = 0.0
            sg = 0.0
            for c in range(o):
                sf += WH[i, k, c] * a[k, c]
                sg += WH[i, k, c] * a[k, o + c]
            f[i, k] = sf
            g[i, k] = sg
    pre = np.empty((E, K))
    alpha = np.empty((E, K))
    peak = np.empty(K)
    total = np.empty(K)
    for i in range(m):
        lo = indptr[i]
        hi = indptr[i + 1]
        peak[:] = -np.inf
        for e in range(lo, hi):
            s = source[e]
            for k in range(K):
                x = f[i, k] + g[s, k]
                pre[e, k] = x
                y = x if x > 0 else NEGATIVE_SLOPE * x
                alpha[e, k] = y
                if y > peak[k]:
                    peak[k] = y
        total[:] = 0.0
        for e in range(lo, hi):
            for k in range(K):
                y = np.exp(alpha[e, k] - peak[k])
                alpha[e, k] = y
                total[k] += y
        for e in range(lo, hi):
            for k in range(K):
                alpha[e, k] /= total[k]
    return pre, alpha


@njit(cache=True)
def aggregate(alpha, WH, source, indptr):
    m, K, o = WH.shape
    out = np.zeros((m, K, o))
    for i in range(m):
        for e in range(indptr[i], indptr[i + 1]):
            s = source[e]
            for k in range(K):
                w = alpha[e, k]
                for c in range(o):
                    out[i, k, c] += w * WH[s, k, c]
    return out


@njit(cache=True)
def attention_backward(d_out, WH, a, pre, alpha, alpha_used, attn_mask, use_mask, source, indptr):
    """Gradients of one attention layer with respect to ``WH`` and ``a``."""
    m, K, o = WH.shape
    dWH = np.zeros((m, K, o))
    df = np.zeros((m, K))
    dg = np.zeros((m, K))
    widest = 0
    for i in range(m):
        widest = max(widest, indptr[i + 1] - indptr[i])
    d_alpha = np.empty((widest, K))
    centre = np.empty(K)
    for i in range(m):
        lo = indptr[i]
        hi = indptr[i + 1]
        centre[:] = 0.0
        for e in range(lo, hi):
            s = source[e]
            for k in range(K):
                dot = 0.0
                w = alpha_used[e, k]
                for c in range(o):
                    dot += d_out[i, k, c] * WH[s, k, c]
                    dWH[s, k, c] += w * d_out[i, k, c]
                if use_mask:
                    dot *= attn_mask[e, k]
                d_alpha[e - lo, k] = dot
                centre[k] += alpha[e, k] * dot
        for e in range(lo, hi):
            s = source[e]
            for k in range(K):
                d = alpha[e, k] * (d_alpha[e - lo, k] - centre[k])
                if not pre[e, k] > 0:
                    d *= NEGATIVE_SLOPE
                df[i, k] += d
                dg[s, k] += d
    da = np.zeros((K, 2 * o))
    for i in range(m):
        for k in range(K):
            for c in range(o):
                da[k, c] += WH[i, k, c] * df[i, k]
                da[k, o + c] += WH[i, k, c] * dg[i, k]
                dWH[i, k, c] += df[i, k] * a[k, c] + dg[i, k] * a[k, o + c]
    return dWH, da

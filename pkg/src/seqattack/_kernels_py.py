"""Pure-numpy implementations of the hot kernels.

Gate layout in every 4H block is (input, forget, output, candidate).
All arrays are float64 and C-contiguous; batch is the leading axis.
"""

import numpy as np


def _sigmoid(a):
    # split by sign so exp never overflows
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    ea = np.exp(a[~pos])
    out[~pos] = ea / (1.0 + ea)
    return out


def lstm_forward(x, h_prev, c_prev, Wx, Wh, b):
    """One LSTM step for a batch.

    ``b`` may be a (4H,) bias or a per-row (B, 4H) bias. Returns the new
    hidden state, the new cell state and the activated gates (B, 4H).
    """
    H = h_prev.shape[1]
    a = x @ Wx.T + h_prev @ Wh.T + b
    gates = np.empty_like(a)
    gates[:, : 3 * H] = _sigmoid(a[:, : 3 * H])
    gates[:, 3 * H :] = np.tanh(a[:, 3 * H :])
    i, f, o, g = gates[:, :H], gates[:, H : 2 * H], gates[:, 2 * H : 3 * H], gates[:, 3 * H :]
    c = f * c_prev + i * g
    h = o * np.tanh(c)
    return h, c, gates


def lstm_backward(dh, dc, c_prev, c, gates, Wx, Wh):
    """Backward pass of :func:`lstm_forward`.

    ``dh`` and ``dc`` are the upstream gradients w.r.t. the step's outputs.
    Returns ``(dx, dh_prev, dc_prev, da)`` where ``da`` is the gradient
    w.r.t. the pre-activation gate vector; parameter gradients follow from
    it as ``da.T @ x``, ``da.T @ h_prev`` and ``da.sum(0)``.
    """
    H = c.shape[1]
    i, f, o, g = gates[:, :H], gates[:, H : 2 * H], gates[:, 2 * H : 3 * H], gates[:, 3 * H :]
    tc = np.tanh(c)
    dct = dc + dh * o * (1.0 - tc * tc)
    da = np.empty_like(gates)
    da[:, :H] = dct * g * i * (1.0 - i)
    da[:, H : 2 * H] = dct * c_prev * f * (1.0 - f)
    da[:, 2 * H : 3 * H] = dh * tc * o * (1.0 - o)
    da[:, 3 * H :] = dct * i * (1.0 - g * g)
    dx = da @ Wx
    dh_prev = da @ Wh
    dc_prev = dct * f
    return dx, dh_prev, dc_prev, da


def nearest(Q, W, allowed):
    """Exact nearest allowed row of ``W`` for every row of ``Q``.

    Distances are computed from explicit differences (no norm expansion),
    so exact duplicates tie exactly and resolve to the lowest index.
    Returns ``(indices, distances)``.
    """
    rows = np.flatnonzero(allowed)
    Wa = W[rows]
    n = Q.shape[0]
    idx = np.empty(n, dtype=np.int64)
    dist = np.empty(n, dtype=np.float64)
    chunk = max(1, 2_000_000 // max(1, Wa.size))
    for s in range(0, n, chunk):
        diff = Q[s : s + chunk, None, :] - Wa[None, :, :]
        d2 = np.einsum("qrd,qrd->qr", diff, diff)
        j = np.argmin(d2, axis=1)
        idx[s : s + chunk] = rows[j]
        dist[s : s + chunk] = np.sqrt(d2[np.arange(len(j)), j])
    return idx, dist

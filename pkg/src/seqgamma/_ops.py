"""Small numpy layer primitives (channels-first, single sample)."""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv2d(x, w, b, stride=1, pad=1):
    """Cross-correlation of ``x (C, H, W)`` with ``w (O, C, k, k)``.

    Returns ``(out, cols)``; ``cols`` is the im2col matrix reused by
    :func:`conv2d_backward`.
    """
    c, _, _ = x.shape
    o, _, k, _ = w.shape
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(xp, (k, k), axis=(1, 2))[:, ::stride, ::stride]
    ho, wo = win.shape[1], win.shape[2]
    cols = win.transpose(0, 3, 4, 1, 2).reshape(c * k * k, ho * wo)
    out = w.reshape(o, -1) @ cols + b[:, None]
    return out.reshape(o, ho, wo), cols


def conv2d_backward(dout, cols, w, x_shape, stride=1, pad=1, need_input=True):
    """Gradients ``(dx, dw, db)`` of :func:`conv2d`; ``dx`` is None if not needed."""
    o, c, k, _ = w.shape
    ho, wo = dout.shape[1:]
    d = dout.reshape(o, -1)
    dw = (d @ cols.T).reshape(w.shape)
    db = d.sum(axis=1)
    if not need_input:
        return None, dw, db
    dcols = (w.reshape(o, -1).T @ d).reshape(c, k, k, ho, wo)
    _, h, wd = x_shape
    dxp = np.zeros((c, h + 2 * pad, wd + 2 * pad))
    for i in range(k):
        for j in range(k):
            dxp[:, i:i + stride * ho:stride, j:j + stride * wo:stride] += dcols[:, i, j]
    return dxp[:, pad:pad + h, pad:pad + wd], dw, db


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))

"""Pure numpy implementations of the hot kernels.

Same signatures and results as the compiled ``_ckernels`` module. Used when
the extension is not built or ``DECNN_BACKEND=python`` is set.
"""

import numpy as np


def im2col(x, k):
    """Unfold a zero-padded ``(n, c, h, w)`` array for a "same" k x k conv.

    Returns ``(n*h*w, k*k*c)``: one row per output pixel (n, y, x order),
    columns ordered by tap (di, dj) then input channel.
    """
    n, c, h, w = x.shape
    p = (k - 1) // 2
    xp = np.zeros((n, h + 2 * p, w + 2 * p, c), dtype=x.dtype)
    xp[:, p:p + h, p:p + w, :] = x.transpose(0, 2, 3, 1)
    cols = np.empty((n, h, w, k, k, c), dtype=x.dtype)
    for di in range(k):
        for dj in range(k):
            cols[:, :, :, di, dj, :] = xp[:, di:di + h, dj:dj + w, :]
    return cols.reshape(n * h * w, k * k * c)


def prelu_forward(x, alpha):
    a = alpha.astype(x.dtype, copy=False)[None, :, None, None]
    return np.where(x > 0, x, a * x)


def prelu_backward(x, alpha, grad_out):
    """Return ``(grad_in, grad_alpha)``; slope 1 is used at x == 0."""
    a = alpha.astype(x.dtype, copy=False)[None, :, None, None]
    neg = x < 0
    grad_in = np.where(neg, a * grad_out, grad_out)
    contrib = np.where(neg, grad_out * x, 0).astype(np.float64)
    grad_alpha = contrib.sum(axis=(0, 2, 3))
    return grad_in, grad_alpha

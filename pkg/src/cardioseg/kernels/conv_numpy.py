"""Pure-numpy convolution kernels, used when the compiled core is absent.

Same contracts as the compiled versions: inputs arrive zero-padded and
C-contiguous, outputs are freshly allocated. The forward/weight passes go
through tensordot (BLAS); the input-gradient pass scatters one tap at a
time to stay general in stride.
"""

import numpy as np


def _windows(xp, kh, kw, stride, out_h, out_w):
    n, c = xp.shape[:2]
    sn, sc, sh, sw = xp.strides
    return np.lib.stride_tricks.as_strided(
        xp,
        (n, c, out_h, out_w, kh, kw),
        (sn, sc, sh * stride, sw * stride, sh, sw),
        writeable=False,
    )


def conv2d_forward(xp, w, b, stride):
    co, ci, kh, kw = w.shape
    out_h = (xp.shape[2] - kh) // stride + 1
    out_w = (xp.shape[3] - kw) // stride + 1
    win = _windows(xp, kh, kw, stride, out_h, out_w)
    y = np.tensordot(win, w, axes=([1, 4, 5], [1, 2, 3]))  # (n, ho, wo, co)
    y += b
    return np.ascontiguousarray(y.transpose(0, 3, 1, 2))


def conv2d_backward_input(dy, w, stride, padded_shape):
    co, ci, kh, kw = w.shape
    dxp = np.zeros(padded_shape, dtype=dy.dtype)
    ho, wo = dy.shape[2], dy.shape[3]
    # dxp[n,ci,i*s+p,j*s+q] += sum_co dy[n,co,i,j] * w[co,ci,p,q]
    t = np.tensordot(dy, w, axes=([1], [0]))  # (n, ho, wo, ci, kh, kw)
    for p in range(kh):
        for q in range(kw):
            dxp[:, :, p:p + stride * ho:stride, q:q + stride * wo:stride] += (
                t[:, :, :, :, p, q].transpose(0, 3, 1, 2)
            )
    return dxp


def conv2d_backward_weights(xp, dy, stride, kernel_hw):
    n, co, ho, wo = dy.shape
    kh, kw = kernel_hw
    win = _windows(xp, kh, kw, stride, ho, wo)
    dw = np.tensordot(dy, win, axes=([0, 2, 3], [0, 2, 3]))  # (co, ci, kh, kw)
    db = dy.sum(axis=(0, 2, 3))
    return np.ascontiguousarray(dw), db

# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled 2D convolution kernels (the training hot loop).

All functions take the already zero-padded input `xp` and write into
preallocated outputs. The 3x3 and 1x1 stride-1 cases the networks use get
fused fast paths; everything else falls through to generic loops. Fused
typing generates float32 and float64 specializations. Single-threaded by
design so results are reproducible.
"""

from cython cimport floating


cdef void _forward_3x3(floating[:, :, :, ::1] xp, floating[:, :, :, ::1] w,
                       floating[::1] b, floating[:, :, :, ::1] out) noexcept nogil:
    cdef Py_ssize_t N = xp.shape[0], Ci = xp.shape[1]
    cdef Py_ssize_t Co = w.shape[0]
    cdef Py_ssize_t Ho = out.shape[2], Wo = out.shape[3]
    cdef Py_ssize_t n, co, ci, i, j
    cdef floating w00, w01, w02, w10, w11, w12, w20, w21, w22, bv
    for n in range(N):
        for co in range(Co):
            bv = b[co]
            for i in range(Ho):
                for j in range(Wo):
                    out[n, co, i, j] = bv
            for ci in range(Ci):
                w00 = w[co, ci, 0, 0]; w01 = w[co, ci, 0, 1]; w02 = w[co, ci, 0, 2]
                w10 = w[co, ci, 1, 0]; w11 = w[co, ci, 1, 1]; w12 = w[co, ci, 1, 2]
                w20 = w[co, ci, 2, 0]; w21 = w[co, ci, 2, 1]; w22 = w[co, ci, 2, 2]
                for i in range(Ho):
                    for j in range(Wo):
                        out[n, co, i, j] += (
                            w00 * xp[n, ci, i, j]
                            + w01 * xp[n, ci, i, j + 1]
                            + w02 * xp[n, ci, i, j + 2]
                            + w10 * xp[n, ci, i + 1, j]
                            + w11 * xp[n, ci, i + 1, j + 1]
                            + w12 * xp[n, ci, i + 1, j + 2]
                            + w20 * xp[n, ci, i + 2, j]
                            + w21 * xp[n, ci, i + 2, j + 1]
                            + w22 * xp[n, ci, i + 2, j + 2]
                        )


cdef void _forward_1x1(floating[:, :, :, ::1] xp, floating[:, :, :, ::1] w,
                       floating[::1] b, floating[:, :, :, ::1] out) noexcept nogil:
    cdef Py_ssize_t N = xp.shape[0], Ci = xp.shape[1]
    cdef Py_ssize_t Co = w.shape[0]
    cdef Py_ssize_t Ho = out.shape[2], Wo = out.shape[3]
    cdef Py_ssize_t n, co, ci, i, j
    cdef floating wv, bv
    for n in range(N):
        for co in range(Co):
            bv = b[co]
            for i in range(Ho):
                for j in range(Wo):
                    out[n, co, i, j] = bv
            for ci in range(Ci):
                wv = w[co, ci, 0, 0]
                for i in range(Ho):
                    for j in range(Wo):
                        out[n, co, i, j] += wv * xp[n, ci, i, j]


cdef void _forward_generic(floating[:, :, :, ::1] xp, floating[:, :, :, ::1] w,
                           floating[::1] b, Py_ssize_t stride,
                           floating[:, :, :, ::1] out) noexcept nogil:
    cdef Py_ssize_t N = xp.shape[0], Ci = xp.shape[1]
    cdef Py_ssize_t Co = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t Ho = out.shape[2], Wo = out.shape[3]
    cdef Py_ssize_t n, co, ci, p, q, i, j, row
    cdef floating wv, bv
    for n in range(N):
        for co in range(Co):
            bv = b[co]
            for i in range(Ho):
                for j in range(Wo):
                    out[n, co, i, j] = bv
            for ci in range(Ci):
                for p in range(kh):
                    for q in range(kw):
                        wv = w[co, ci, p, q]
                        for i in range(Ho):
                            row = i * stride + p
                            for j in range(Wo):
                                out[n, co, i, j] += wv * xp[n, ci, row, j * stride + q]


def conv2d_forward(floating[:, :, :, ::1] xp,
                   floating[:, :, :, ::1] w,
                   floating[::1] b,
                   Py_ssize_t stride,
                   floating[:, :, :, ::1] out):
    cdef Py_ssize_t kh = w.shape[2], kw = w.shape[3]
    if stride == 1 and kh == 3 and kw == 3:
        _forward_3x3(xp, w, b, out)
    elif stride == 1 and kh == 1 and kw == 1:
        _forward_1x1(xp, w, b, out)
    else:
        _forward_generic(xp, w, b, stride, out)


def conv2d_backward_input(floating[:, :, :, ::1] dy,
                          floating[:, :, :, ::1] w,
                          Py_ssize_t stride,
                          floating[:, :, :, ::1] dxp):
    # generic scatter; the stride-1 case is routed through conv2d_forward
    # with a flipped kernel at the layer level instead
    cdef Py_ssize_t N = dy.shape[0], Co = dy.shape[1]
    cdef Py_ssize_t Ci = w.shape[1], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t Ho = dy.shape[2], Wo = dy.shape[3]
    cdef Py_ssize_t n, co, ci, p, q, i, j, row
    cdef floating wv
    with nogil:
        for n in range(N):
            for ci in range(Ci):
                for co in range(Co):
                    for p in range(kh):
                        for q in range(kw):
                            wv = w[co, ci, p, q]
                            for i in range(Ho):
                                row = i * stride + p
                                for j in range(Wo):
                                    dxp[n, ci, row, j * stride + q] += wv * dy[n, co, i, j]


cdef void _backward_weights_3x3(floating[:, :, :, ::1] xp,
                                floating[:, :, :, ::1] dy,
                                floating[:, :, :, ::1] dw) noexcept nogil:
    cdef Py_ssize_t N = xp.shape[0], Ci = xp.shape[1]
    cdef Py_ssize_t Co = dy.shape[1]
    cdef Py_ssize_t Ho = dy.shape[2], Wo = dy.shape[3]
    cdef Py_ssize_t n, co, ci, i, j
    cdef floating d
    cdef floating a00, a01, a02, a10, a11, a12, a20, a21, a22
    for co in range(Co):
        for ci in range(Ci):
            a00 = a01 = a02 = a10 = a11 = a12 = a20 = a21 = a22 = 0
            for n in range(N):
                for i in range(Ho):
                    for j in range(Wo):
                        d = dy[n, co, i, j]
                        a00 += d * xp[n, ci, i, j]
                        a01 += d * xp[n, ci, i, j + 1]
                        a02 += d * xp[n, ci, i, j + 2]
                        a10 += d * xp[n, ci, i + 1, j]
                        a11 += d * xp[n, ci, i + 1, j + 1]
                        a12 += d * xp[n, ci, i + 1, j + 2]
                        a20 += d * xp[n, ci, i + 2, j]
                        a21 += d * xp[n, ci, i + 2, j + 1]
                        a22 += d * xp[n, ci, i + 2, j + 2]
            dw[co, ci, 0, 0] = a00; dw[co, ci, 0, 1] = a01; dw[co, ci, 0, 2] = a02
            dw[co, ci, 1, 0] = a10; dw[co, ci, 1, 1] = a11; dw[co, ci, 1, 2] = a12
            dw[co, ci, 2, 0] = a20; dw[co, ci, 2, 1] = a21; dw[co, ci, 2, 2] = a22


cdef void _backward_weights_generic(floating[:, :, :, ::1] xp,
                                    floating[:, :, :, ::1] dy,
                                    Py_ssize_t stride,
                                    floating[:, :, :, ::1] dw) noexcept nogil:
    cdef Py_ssize_t N = xp.shape[0], Ci = xp.shape[1]
    cdef Py_ssize_t Co = dy.shape[1], kh = dw.shape[2], kw = dw.shape[3]
    cdef Py_ssize_t Ho = dy.shape[2], Wo = dy.shape[3]
    cdef Py_ssize_t n, co, ci, p, q, i, j, row
    cdef floating acc
    for co in range(Co):
        for ci in range(Ci):
            for p in range(kh):
                for q in range(kw):
                    acc = 0
                    for n in range(N):
                        for i in range(Ho):
                            row = i * stride + p
                            for j in range(Wo):
                                acc += dy[n, co, i, j] * xp[n, ci, row, j * stride + q]
                    dw[co, ci, p, q] = acc


def conv2d_backward_weights(floating[:, :, :, ::1] xp,
                            floating[:, :, :, ::1] dy,
                            Py_ssize_t stride,
                            floating[:, :, :, ::1] dw,
                            floating[::1] db):
    cdef Py_ssize_t N = xp.shape[0]
    cdef Py_ssize_t Co = dy.shape[1], kh = dw.shape[2], kw = dw.shape[3]
    cdef Py_ssize_t Ho = dy.shape[2], Wo = dy.shape[3]
    cdef Py_ssize_t n, co, i, j
    cdef floating bacc
    with nogil:
        for co in range(Co):
            bacc = 0
            for n in range(N):
                for i in range(Ho):
                    for j in range(Wo):
                        bacc += dy[n, co, i, j]
            db[co] = bacc
        if stride == 1 and kh == 3 and kw == 3:
            _backward_weights_3x3(xp, dy, dw)
        else:
            _backward_weights_generic(xp, dy, stride, dw)

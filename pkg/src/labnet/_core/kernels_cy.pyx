# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled patch pack/unpack kernels; surface mirrors kernels_np."""
import numpy as np

cimport cython

ctypedef fused floating:
    float
    double


@cython.boundscheck(False)
@cython.wraparound(False)
def _im2col_impl(floating[:, :, :, ::1] padded, floating[:, :, ::1] cols,
                 int kh, int kw, int dilation, int out_h, int out_w):
    cdef Py_ssize_t n = padded.shape[0]
    cdef Py_ssize_t c = padded.shape[1]
    cdef Py_ssize_t b, ch, i, j, y, x, row, ys, xs
    with nogil:
        for b in range(n):
            for ch in range(c):
                for i in range(kh):
                    ys = i * dilation
                    for j in range(kw):
                        xs = j * dilation
                        row = (ch * kh + i) * kw + j
                        for y in range(out_h):
                            for x in range(out_w):
                                cols[b, row, y * out_w + x] = padded[b, ch, ys + y, xs + x]


@cython.boundscheck(False)
@cython.wraparound(False)
def _col2im_impl(floating[:, :, ::1] cols, floating[:, :, :, ::1] padded,
                 int kh, int kw, int dilation, int out_h, int out_w):
    cdef Py_ssize_t n = padded.shape[0]
    cdef Py_ssize_t c = padded.shape[1]
    cdef Py_ssize_t b, ch, i, j, y, x, row, ys, xs
    with nogil:
        for b in range(n):
            for ch in range(c):
                for i in range(kh):
                    ys = i * dilation
                    for j in range(kw):
                        xs = j * dilation
                        row = (ch * kh + i) * kw + j
                        for y in range(out_h):
                            for x in range(out_w):
                                padded[b, ch, ys + y, xs + x] += cols[b, row, y * out_w + x]


def im2col(padded, int kh, int kw, int dilation, int out_h, int out_w):
    """Pack a zero-padded (n, c, hp, wp) array into (n, c*kh*kw, out_h*out_w)."""
    padded = np.ascontiguousarray(padded)
    n, c = padded.shape[0], padded.shape[1]
    if padded.dtype not in (np.float32, np.float64):
        padded = padded.astype(np.float64)
    cols = np.empty((n, c * kh * kw, out_h * out_w), dtype=padded.dtype)
    _im2col_impl(padded, cols, kh, kw, dilation, out_h, out_w)
    return cols


def col2im_add(cols, int kh, int kw, int dilation, int hp, int wp, int out_h, int out_w):
    """Adjoint of im2col: scatter-add a patch matrix back onto the padded grid."""
    cols = np.ascontiguousarray(cols)
    if cols.dtype not in (np.float32, np.float64):
        cols = cols.astype(np.float64)
    n = cols.shape[0]
    c = cols.shape[1] // (kh * kw)
    padded = np.zeros((n, c, hp, wp), dtype=cols.dtype)
    _col2im_impl(cols, padded, kh, kw, dilation, out_h, out_w)
    return padded

"""Pure-numpy patch pack/unpack kernels for the convolution driver.

Same surface as the compiled core in kernels_cy.pyx; one of the two is
selected at import by labnet.kernels.
"""
import numpy as np


def im2col(padded, kh, kw, dilation, out_h, out_w):
    """Pack a zero-padded (n, c, hp, wp) array into (n, c*kh*kw, out_h*out_w).

    Row (c*kh + i)*kw + j of the patch matrix holds the input plane shifted
    by (i*dilation, j*dilation), so a single GEMM against the flattened
    filter bank evaluates the dilated cross-correlation.
    """
    n, c, hp, wp = padded.shape
    cols = np.empty((n, c, kh * kw, out_h, out_w), dtype=padded.dtype)
    for i in range(kh):
        for j in range(kw):
            ys = i * dilation
            xs = j * dilation
            cols[:, :, i * kw + j] = padded[:, :, ys:ys + out_h, xs:xs + out_w]
    return cols.reshape(n, c * kh * kw, out_h * out_w)


def col2im_add(cols, kh, kw, dilation, hp, wp, out_h, out_w):
    """Adjoint of im2col: scatter-add a patch matrix back onto the padded grid."""
    n = cols.shape[0]
    c = cols.shape[1] // (kh * kw)
    cols = cols.reshape(n, c, kh * kw, out_h, out_w)
    padded = np.zeros((n, c, hp, wp), dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            ys = i * dilation
            xs = j * dilation
            padded[:, :, ys:ys + out_h, xs:xs + out_w] += cols[:, :, i * kw + j]
    return padded

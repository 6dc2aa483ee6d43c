"""Convolution driver: backend selection plus forward/backward GEMM assembly.

The hot data movement (im2col / col2im) comes from either the compiled core
or the numpy fallback; the arithmetic itself is a single BLAS matmul per
pass either way. Selection happens once at import:

  LABNET_KERNELS=auto   compiled core when importable, else numpy (default)
  LABNET_KERNELS=cy     require the compiled core
  LABNET_KERNELS=np     force the numpy fallback

benchmarks/bench_kernels.py compares the two backends directly.
"""
import os

import numpy as np

from .errors import ArgumentError
from ._core import kernels_np

_choice = os.environ.get("LABNET_KERNELS", "auto")
if _choice not in ("auto", "cy", "np"):
    raise ArgumentError(f"LABNET_KERNELS must be auto, cy or np, got {_choice!r}")

if _choice == "np":
    _impl = kernels_np
    BACKEND = "numpy"
else:
    try:
        from ._core import kernels_cy as _impl
        BACKEND = "cython"
    except ImportError:
        if _choice == "cy":
            raise
        _impl = kernels_np
        BACKEND = "numpy"

im2col = _impl.im2col
col2im_add = _impl.col2im_add


def _pad(x, pad):
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))


def conv2d_forward(x, w, b, dilation):
    """Dilated same-padding cross-correlation.

    x: (n, cin, h, w); w: (cout, cin, kh, kw); b: (cout,) or None.
    Returns (n, cout, h, w); spatial size is preserved by construction.
    """
    n, cin, h, wd = x.shape
    cout, _, kh, kw = w.shape
    if kh == 1 and kw == 1:
        y = np.matmul(w.reshape(cout, cin), x.reshape(n, cin, h * wd))
    else:
        pad = dilation * (kh - 1) // 2
        cols = im2col(_pad(x, pad), kh, kw, dilation, h, wd)
        y = np.matmul(w.reshape(cout, cin * kh * kw), cols)
    if b is not None:
        y = y + b[:, None]
    return y.reshape(n, cout, h, wd)


def conv2d_backward(x, w, gy, dilation):
    """Gradients of conv2d_forward w.r.t. input, weight and bias."""
    n, cin, h, wd = x.shape
    cout, _, kh, kw = w.shape
    gyr = gy.reshape(n, cout, h * wd)
    if kh == 1 and kw == 1:
        w2 = w.reshape(cout, cin)
        gx = np.matmul(w2.T, gyr).reshape(x.shape)
        gw = np.matmul(gyr, x.reshape(n, cin, h * wd).transpose(0, 2, 1)).sum(axis=0)
    else:
        pad = dilation * (kh - 1) // 2
        w2 = w.reshape(cout, cin * kh * kw)
        gcols = np.matmul(w2.T, gyr)
        gxp = col2im_add(gcols, kh, kw, dilation, h + 2 * pad, wd + 2 * pad, h, wd)
        gx = gxp[:, :, pad:pad + h, pad:pad + wd] if pad else gxp
        cols = im2col(_pad(x, pad), kh, kw, dilation, h, wd)
        gw = np.matmul(gyr, cols.transpose(0, 2, 1)).sum(axis=0)
    gb = gy.sum(axis=(0, 2, 3))
    return gx, gw.reshape(w.shape), gb

"""Minimal reverse-mode tensor engine over numpy arrays.

Feature maps are rank-4 (n, c, h, w) row-major arrays; attention and FC
math uses rank-2 matrices; losses reduce to 0-d scalars. Every operation
builds the graph eagerly and records a closure that scatters the upstream
gradient into its parents, accumulating additively when a value feeds
several consumers. All computation is plain numpy, so identical inputs
give bit-identical outputs run to run.

Gradients are checked against central finite differences in the test
suite (see labnet.gradcheck); new ops should come with the same check.
"""
import numpy as np

from . import kernels
from .errors import ArgumentError, NumericError, ShapeError

_STD_EPS = 1e-12  # guards the std backward at zero spread; forward is exact


class Tensor:
    """A numpy array plus an optional gradient slot and graph linkage."""

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        tag = f" name={self.name}" if self.name else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{tag})"

    def item(self):
        return self.data.item()

    def backward(self):
        backward(self)

    # arithmetic sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, -as_tensor(other))

    def __rsub__(self, other):
        return add(as_tensor(other), -self)


def as_tensor(value):
    return value if isinstance(value, Tensor) else Tensor(np.asarray(value))


def _node(data, parents, backward_fn):
    out = Tensor(data)
    out._parents = tuple(parents)
    out._backward = backward_fn
    return out


def _accum(t, g):
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _unbroadcast(g, shape):
    """Reduce a broadcast gradient back to the original operand shape."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def backward(loss):
    """Populate grad slots with d(loss)/d(node) for every node feeding loss.

    The graph is acyclic by construction; gradients of values consumed by
    several ops accumulate additively.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    topo = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, done = stack.pop()
        if done:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


# ---------------------------------------------------------------------------
# elementwise and reduction ops


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = _node(a.data + b.data, (a, b), None)

    def _bwd(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))

    out._backward = _bwd
    return out


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = _node(a.data * b.data, (a, b), None)

    def _bwd(g):
        _accum(a, _unbroadcast(g * b.data, a.data.shape))
        _accum(b, _unbroadcast(g * a.data, b.data.shape))

    out._backward = _bwd
    return out


def absolute(x):
    out = _node(np.abs(x.data), (x,), None)

    def _bwd(g):
        _accum(x, g * np.sign(x.data))

    out._backward = _bwd
    return out


def square(x):
    out = _node(np.square(x.data), (x,), None)

    def _bwd(g):
        _accum(x, 2.0 * g * x.data)

    out._backward = _bwd
    return out


def tsum(x):
    out = _node(x.data.sum(), (x,), None)

    def _bwd(g):
        _accum(x, np.broadcast_to(g, x.data.shape).astype(x.data.dtype, copy=False))

    out._backward = _bwd
    return out


def tmean(x):
    scale = 1.0 / x.data.size
    out = _node(np.asarray(x.data.mean(), dtype=x.data.dtype), (x,), None)

    def _bwd(g):
        _accum(x, np.broadcast_to(g * scale, x.data.shape).astype(x.data.dtype, copy=False))

    out._backward = _bwd
    return out


def reshape(x, shape):
    out = _node(x.data.reshape(shape), (x,), None)

    def _bwd(g):
        _accum(x, g.reshape(x.data.shape))

    out._backward = _bwd
    return out


def sigmoid(x):
    d = x.data
    y = np.empty_like(d)
    pos = d >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    ex = np.exp(d[~pos])
    y[~pos] = ex / (1.0 + ex)
    out = _node(y, (x,), None)

    def _bwd(g):
        _accum(x, g * y * (1.0 - y))

    out._backward = _bwd
    return out


def leakyrelu(x, slope=0.2):
    pos = x.data > 0
    out = _node(np.where(pos, x.data, x.data * slope), (x,), None)

    def _bwd(g):
        _accum(x, np.where(pos, g, g * slope))

    out._backward = _bwd
    return out


# ---------------------------------------------------------------------------
# convolution


class ConvWeight:
    """Parameters of one 1x1 or 3x3 convolution with an optional dilation.

    Wraps the weight (cout, cin, kh, kw) and per-output-channel bias as
    trainable tensors. Only the two kernel sizes the network uses are
    accepted, and dilation is meaningful for 3x3 only.
    """

    __slots__ = ("weight", "bias", "dilation")

    def __init__(self, weight, bias, dilation=1):
        weight = weight if isinstance(weight, Tensor) else Tensor(weight, requires_grad=True)
        bias = bias if isinstance(bias, Tensor) else Tensor(bias, requires_grad=True)
        cout, cin, kh, kw = weight.data.shape
        if (kh, kw) not in ((1, 1), (3, 3)):
            raise ArgumentError(f"kernel must be 1x1 or 3x3, got {kh}x{kw}")
        if dilation < 1:
            raise ArgumentError(f"dilation must be >= 1, got {dilation}")
        if (kh, kw) == (1, 1) and dilation != 1:
            raise ArgumentError("1x1 kernels take dilation 1")
        if bias.data.shape != (cout,):
            raise ShapeError(f"bias shape {bias.data.shape} != ({cout},)")
        self.weight = weight
        self.bias = bias
        self.dilation = dilation

    @property
    def out_channels(self):
        return self.weight.data.shape[0]

    @property
    def in_channels(self):
        return self.weight.data.shape[1]

    @property
    def kernel(self):
        return self.weight.data.shape[2:]


def conv2d(x, cw):
    """Dilated stride-1 cross-correlation with same zero padding plus bias."""
    if x.data.ndim != 4:
        raise ShapeError(f"conv2d input must be rank-4, got {x.data.shape}")
    if x.data.shape[1] != cw.in_channels:
        raise ShapeError(
            f"conv2d channels {x.data.shape[1]} != weight in_channels {cw.in_channels}")
    if not np.isfinite(x.data).all():
        raise NumericError("conv2d input contains non-finite values")
    w, b = cw.weight, cw.bias
    y = kernels.conv2d_forward(x.data, w.data, b.data, cw.dilation)
    out = _node(y, (x, w, b), None)

    def _bwd(g):
        gx, gw, gb = kernels.conv2d_backward(x.data, w.data, g, cw.dilation)
        _accum(x, gx)
        _accum(w, gw)
        _accum(b, gb)

    out._backward = _bwd
    return out


def stencil3x3(x, kernel, pad="edge"):
    """Fixed (non-trainable) per-channel 3x3 filter, same-size output.

    pad "edge" replicates the border (so the filter annihilates constants
    everywhere, which the channel-attention statistic relies on); "zero"
    pads with zeros. Both backwards are exact adjoints, checked against
    finite differences in the tests.
    """
    k = np.asarray(kernel, dtype=x.data.dtype)
    if k.shape != (3, 3):
        raise ShapeError(f"stencil kernel must be 3x3, got {k.shape}")
    if pad not in ("edge", "zero"):
        raise ArgumentError(f"stencil pad must be edge or zero, got {pad!r}")
    out = _node(_correlate3(x.data, k, pad), (x,), None)
    kflip = k[::-1, ::-1].copy()

    def _bwd(g):
        if pad == "zero":
            _accum(x, _correlate3(g, kflip, "zero"))
        else:
            _accum(x, _fold_edges(_corr_valid(np.pad(
                g, ((0, 0), (0, 0), (2, 2), (2, 2))), kflip)))

    out._backward = _bwd
    return out


def _correlate3(arr, k, pad):
    n, c, h, w = arr.shape
    mode = "edge" if pad == "edge" else "constant"
    p = np.pad(arr, ((0, 0), (0, 0), (1, 1), (1, 1)), mode=mode)
    y = np.zeros_like(arr)
    for i in range(3):
        for j in range(3):
            if k[i, j] != 0.0:
                y += k[i, j] * p[:, :, i:i + h, j:j + w]
    return y


def _corr_valid(arr, k):
    h, w = arr.shape[2] - 2, arr.shape[3] - 2
    y = np.zeros(arr.shape[:2] + (h, w), dtype=arr.dtype)
    for i in range(3):
        for j in range(3):
            if k[i, j] != 0.0:
                y += k[i, j] * arr[:, :, i:i + h, j:j + w]
    return y


def _fold_edges(gp):
    """Adjoint of replicate padding: fold the padded ring onto the border."""
    gx = gp[:, :, 1:-1, 1:-1].copy()
    gx[:, :, 0, :] += gp[:, :, 0, 1:-1]
    gx[:, :, -1, :] += gp[:, :, -1, 1:-1]
    gx[:, :, :, 0] += gp[:, :, 1:-1, 0]
    gx[:, :, :, -1] += gp[:, :, 1:-1, -1]
    gx[:, :, 0, 0] += gp[:, :, 0, 0]
    gx[:, :, 0, -1] += gp[:, :, 0, -1]
    gx[:, :, -1, 0] += gp[:, :, -1, 0]
    gx[:, :, -1, -1] += gp[:, :, -1, -1]
    return gx


# ---------------------------------------------------------------------------
# shape-assembly ops


def concat_channels(parts):
    """Stack rank-4 tensors along the channel axis, in argument order."""
    if not parts:
        raise ArgumentError("concat_channels needs at least one tensor")
    ref = parts[0].data.shape
    for p in parts:
        s = p.data.shape
        if len(s) != 4 or s[0] != ref[0] or s[2:] != ref[2:]:
            raise ShapeError(f"concat_channels spatial/batch mismatch: {ref} vs {s}")
    out = _node(np.concatenate([p.data for p in parts], axis=1), tuple(parts), None)
    splits = np.cumsum([p.data.shape[1] for p in parts])[:-1]

    def _bwd(g):
        for p, piece in zip(parts, np.split(g, splits, axis=1)):
            _accum(p, piece)

    out._backward = _bwd
    return out


def slice_channels(x, start, stop):
    out = _node(x.data[:, start:stop], (x,), None)

    def _bwd(g):
        if x.grad is None:
            x.grad = np.zeros_like(x.data)
        x.grad[:, start:stop] += g

    out._backward = _bwd
    return out


# ---------------------------------------------------------------------------
# resize


def _interp_matrix(out_size, in_size, mode, dtype):
    """(out_size, in_size) 1-D resampling operator; bilinear uses the
    align-corners-false convention, nearest floors the scaled index."""
    m = np.zeros((out_size, in_size), dtype=np.float64)
    scale = in_size / out_size
    for i in range(out_size):
        if mode == "nearest":
            src = min(int(np.floor(i * scale)), in_size - 1)
            m[i, src] = 1.0
        else:
            src = (i + 0.5) * scale - 0.5
            src = min(max(src, 0.0), in_size - 1.0)
            x0 = int(np.floor(src))
            x1 = min(x0 + 1, in_size - 1)
            frac = src - x0
            m[i, x0] += 1.0 - frac
            m[i, x1] += frac
    return m.astype(dtype)


_MATRIX_CACHE = {}


def _resample_ops(out_size, in_size, mode, dtype):
    key = (out_size, in_size, mode, np.dtype(dtype).str)
    if key not in _MATRIX_CACHE:
        _MATRIX_CACHE[key] = _interp_matrix(out_size, in_size, mode, dtype)
    return _MATRIX_CACHE[key]


def resize(x, target, mode="bilinear"):
    """Resample a rank-4 tensor to (h, w); bilinear for features, nearest
    for masks. Exact identity when the target equals the source size."""
    th, tw = target
    if th < 1 or tw < 1:
        raise ArgumentError(f"resize target must be positive, got {target}")
    if mode not in ("bilinear", "nearest"):
        raise ArgumentError(f"unknown resize mode {mode!r}")
    n, c, h, w = x.data.shape
    rh = _resample_ops(th, h, mode, x.data.dtype)
    rw = _resample_ops(tw, w, mode, x.data.dtype)
    y = np.matmul(np.matmul(rh, x.data), rw.T)
    out = _node(y, (x,), None)

    def _bwd(g):
        _accum(x, np.matmul(np.matmul(rh.T, g), rw))

    out._backward = _bwd
    return out


# ---------------------------------------------------------------------------
# matrix ops for attention and the FC path


def matmul(a, b):
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError("matmul expects rank-2 operands")
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul inner dims differ: {a.data.shape} x {b.data.shape}")
    out = _node(a.data @ b.data, (a, b), None)

    def _bwd(g):
        _accum(a, g @ b.data.T)
        _accum(b, a.data.T @ g)

    out._backward = _bwd
    return out


def transpose2d(x):
    out = _node(x.data.T.copy(), (x,), None)

    def _bwd(g):
        _accum(x, g.T)

    out._backward = _bwd
    return out


def row_softmax(m):
    """Softmax over each row, stabilized by per-row max subtraction."""
    if m.data.ndim != 2:
        raise ShapeError("row_softmax expects a rank-2 matrix")
    z = m.data - m.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=1, keepdims=True)
    out = _node(y, (m,), None)

    def _bwd(g):
        _accum(m, (g - (g * y).sum(axis=1, keepdims=True)) * y)

    out._backward = _bwd
    return out


# ---------------------------------------------------------------------------
# spatial statistics


def spatial_mean(x):
    """Mean over the spatial grid of each (n, c) plane -> (n, c)."""
    n, c, h, w = x.data.shape
    out = _node(x.data.mean(axis=(2, 3)), (x,), None)

    def _bwd(g):
        _accum(x, np.broadcast_to(g[:, :, None, None] / (h * w), x.data.shape))

    out._backward = _bwd
    return out


def spatial_std(x):
    """Population standard deviation over each (n, c) plane -> (n, c).

    Divides by h*w with no Bessel correction; a constant plane gives an
    exact 0 and a zero (sub)gradient.
    """
    n, c, h, w = x.data.shape
    mu = x.data.mean(axis=(2, 3))
    centered = x.data - mu[:, :, None, None]
    var = np.mean(centered * centered, axis=(2, 3))
    std = np.sqrt(var)
    out = _node(std, (x,), None)

    def _bwd(g):
        denom = (h * w) * np.maximum(std, _STD_EPS)
        _accum(x, (g / denom)[:, :, None, None] * centered)

    out._backward = _bwd
    return out


# ---------------------------------------------------------------------------
# pixel gather / paste (the copy-and-replace step of spatial attention)


def gather_pixels(x, elem, idx):
    """Rows (len(idx), c) of batch element `elem`, one per flat spatial index.

    `idx` must hold distinct indices (mask positions are unique by nature).
    """
    n, c, h, w = x.data.shape
    idx = np.asarray(idx, dtype=np.intp)
    out = _node(x.data[elem].reshape(c, h * w)[:, idx].T.copy(), (x,), None)

    def _bwd(g):
        if x.grad is None:
            x.grad = np.zeros_like(x.data)
        x.grad[elem].reshape(c, h * w)[:, idx] += g.T

    out._backward = _bwd
    return out


def paste_pixels(base, rows, elem, idx):
    """Copy of `base` with rows written at flat indices `idx` of element `elem`.

    Gradients split exactly: pasted positions feed `rows`, everything else
    feeds `base`.
    """
    n, c, h, w = base.data.shape
    idx = np.asarray(idx, dtype=np.intp)
    if rows.data.shape != (idx.size, c):
        raise ShapeError(f"paste rows shape {rows.data.shape} != ({idx.size}, {c})")
    data = base.data.copy()
    data[elem].reshape(c, h * w)[:, idx] = rows.data.T
    out = _node(data, (base, rows), None)

    def _bwd(g):
        gb = g.copy()
        gb[elem].reshape(c, h * w)[:, idx] = 0.0
        _accum(base, gb)
        _accum(rows, g[elem].reshape(c, h * w)[:, idx].T)

    out._backward = _bwd
    return out


# ---------------------------------------------------------------------------
# forward differences (image gradient for the training objective)


def forward_diff(x, axis):
    """x[i+1] - x[i] along a spatial axis, last position zero-padded."""
    if axis not in (2, 3):
        raise ArgumentError(f"forward_diff axis must be 2 or 3, got {axis}")
    d = x.data
    y = np.zeros_like(d)
    if axis == 2:
        y[:, :, :-1, :] = d[:, :, 1:, :] - d[:, :, :-1, :]
    else:
        y[:, :, :, :-1] = d[:, :, :, 1:] - d[:, :, :, :-1]
    out = _node(y, (x,), None)

    def _bwd(g):
        gx = np.zeros_like(g)
        if axis == 2:
            ge = g[:, :, :-1, :]
            gx[:, :, 1:, :] += ge
            gx[:, :, :-1, :] -= ge
        else:
            ge = g[:, :, :, :-1]
            gx[:, :, :, 1:] += ge
            gx[:, :, :, :-1] -= ge
        _accum(x, gx)

    out._backward = _bwd
    return out

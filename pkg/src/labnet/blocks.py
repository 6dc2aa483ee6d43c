"""The three sub-networks the model is assembled from.

- elementary unit: three stages of parallel dilated 3x3 convolutions,
  each stage concatenated (16+32+48 channels) and merged to 32 by a 1x1
  conv; the unit's output is the 96-channel concat of the merged stages.
- enhanced channel attention (ECA): per-channel edge-energy statistics
  drive a squeeze-excite gate over those 96 channels.
- local spatial attention (LSA): attention from shadow pixels to the
  boundary ring just outside the mask, run at a reduced resolution.

Parameter containers here are dumb structs; creation and naming live in
the model registry. Masks are plain numpy arrays (no gradients flow
through them).
"""
import numpy as np

from . import autodiff as ad
from .errors import ArgumentError, ShapeError

LAPLACIAN_4 = np.array([[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]])
LAPLACIAN_8 = np.array([[1.0, 1.0, 1.0], [1.0, -8.0, 1.0], [1.0, 1.0, 1.0]])
SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
SOBEL_Y = SOBEL_X.T.copy()

ECA_MODES = ("laplacian", "laplacian8", "sobel", "gap", "off")


def laplacian_filter(x, variant="laplacian"):
    """Fixed per-channel Laplacian; 4-neighbor by default."""
    k = LAPLACIAN_8 if variant == "laplacian8" else LAPLACIAN_4
    return ad.stencil3x3(x, k)


# ---------------------------------------------------------------------------
# elementary unit


class ElementaryUnitConfig:
    """Stage layout: dilation-rate triples and the channel split per stage.

    stage_channels pairs with each stage's rates in ascending-rate order,
    so the widest path always carries the largest dilation.
    """

    __slots__ = ("rates", "stage_channels", "merge_channels")

    def __init__(self, rates=((1, 4, 16), (2, 8, 32), (4, 16, 64)),
                 stage_channels=(16, 32, 48), merge_channels=32):
        rates = tuple(tuple(r) for r in rates)
        stage_channels = tuple(stage_channels)
        if any(len(r) != len(stage_channels) for r in rates):
            raise ArgumentError("each stage needs one channel count per dilation rate")
        if any(d < 1 for r in rates for d in r):
            raise ArgumentError("dilation rates must be >= 1")
        self.rates = rates
        self.stage_channels = stage_channels
        self.merge_channels = merge_channels

    @property
    def concat_channels(self):
        return sum(self.stage_channels)

    @property
    def unit_channels(self):
        return len(self.rates) * self.merge_channels


class StageWeights:
    __slots__ = ("convs", "merge")

    def __init__(self, convs, merge):
        self.convs = list(convs)
        self.merge = merge


class ElementaryUnitWeights:
    __slots__ = ("stages",)

    def __init__(self, stages):
        self.stages = list(stages)


def elementary_unit(x, weights):
    """Run the staged dilated convs; stage n feeds on stage n-1's merge.

    Returns (merged_stage_outputs, concat) where the concat stacks the
    merged outputs of every stage in order.
    """
    merged = []
    cur = x
    for stage in weights.stages:
        taps = [ad.conv2d(cur, cw) for cw in stage.convs]
        cur = ad.conv2d(ad.concat_channels(taps), stage.merge)
        merged.append(cur)
    return merged, ad.concat_channels(merged)


# ---------------------------------------------------------------------------
# enhanced channel attention


class ECAParams:
    """Squeeze-excite gate weights plus the edge statistic to drive it."""

    __slots__ = ("w1", "b1", "w2", "b2", "mode")

    def __init__(self, w1, b1, w2, b2, mode="laplacian"):
        if mode not in ECA_MODES:
            raise ArgumentError(f"eca mode must be one of {ECA_MODES}, got {mode!r}")
        self.w1 = w1 if isinstance(w1, ad.Tensor) else ad.Tensor(w1, requires_grad=True)
        self.b1 = b1 if isinstance(b1, ad.Tensor) else ad.Tensor(b1, requires_grad=True)
        self.w2 = w2 if isinstance(w2, ad.Tensor) else ad.Tensor(w2, requires_grad=True)
        self.b2 = b2 if isinstance(b2, ad.Tensor) else ad.Tensor(b2, requires_grad=True)
        self.mode = mode

    @property
    def channels(self):
        return self.w1.data.shape[0]


def channel_statistic(x, mode):
    """Per-channel scalar summary (n, c) that feeds the gate FC stack."""
    if mode == "gap":
        return ad.spatial_mean(x)
    if mode == "sobel":
        mag = ad.add(ad.absolute(ad.stencil3x3(x, SOBEL_X)),
                     ad.absolute(ad.stencil3x3(x, SOBEL_Y)))
        return ad.spatial_std(mag)
    return ad.spatial_std(laplacian_filter(x, mode))


def apply_channel_gate(x, gate):
    """Scale each channel plane by its gate value; gate is (n, c)."""
    n, c = gate.data.shape
    return ad.mul(x, ad.reshape(gate, (n, c, 1, 1)))


def eca(x, params):
    """Gate the input's channels by their edge-energy statistics."""
    if params.mode == "off":
        return x
    if x.data.shape[1] != params.channels:
        raise ShapeError(
            f"eca expects {params.channels} channels, got {x.data.shape[1]}")
    s = channel_statistic(x, params.mode)
    h = ad.leakyrelu(ad.add(ad.matmul(s, params.w1), params.b1), slope=0.2)
    gate = ad.sigmoid(ad.add(ad.matmul(h, params.w2), params.b2))
    return apply_channel_gate(x, gate)


# ---------------------------------------------------------------------------
# mask morphology (plain numpy; masks never carry gradients)


def dilate_mask(mask, kernel):
    """Single-pass binary dilation with a square element of odd size."""
    if kernel % 2 == 0 or kernel < 1:
        raise ArgumentError(f"dilation kernel must be odd and positive, got {kernel}")
    mask = np.asarray(mask)
    h, w = mask.shape[-2:]
    r = kernel // 2
    p = np.zeros(mask.shape[:-2] + (h + 2 * r, w + 2 * r), dtype=mask.dtype)
    p[..., r:r + h, r:r + w] = mask
    out = np.zeros_like(mask)
    for i in range(kernel):
        for j in range(kernel):
            np.maximum(out, p[..., i:i + h, j:j + w], out=out)
    return out


def boundary_mask(mask, kernel):
    """Ring of pixels the dilation adds: dilate(mask) - mask."""
    return dilate_mask(mask, kernel) - np.asarray(mask)


# ---------------------------------------------------------------------------
# local spatial attention


class LSAParams:
    """Attention weights plus the fixed geometry knobs.

    m is the working resolution the module downsamples to (clamped to the
    input size at run time); dilate_kernel sets the boundary ring width.
    """

    __slots__ = ("conv_s", "conv_ns", "merge", "m", "dilate_kernel", "region",
                 "downsample")

    def __init__(self, conv_s, conv_ns, merge, m=256, dilate_kernel=7,
                 region="boundary", downsample=True):
        if m < 8:
            raise ArgumentError(f"lsa working size must be >= 8, got {m}")
        if region not in ("boundary", "nonshadow"):
            raise ArgumentError(f"lsa region must be boundary or nonshadow, got {region!r}")
        self.conv_s = conv_s
        self.conv_ns = conv_ns
        self.merge = merge
        self.m = m
        self.dilate_kernel = dilate_kernel
        self.region = region
        self.downsample = downsample

    @property
    def k(self):
        return self.conv_s.out_channels


def _binarize(mask):
    return (mask >= 0.5).astype(mask.dtype)


def attention_transfer(rows_s, rows_k):
    """Attend each query row over the key rows; unscaled dot products.

    Returns (mixed rows, attention matrix). Rows of the attention matrix
    sum to 1, so each mixed row is a convex combination of key rows.
    """
    att = ad.row_softmax(ad.matmul(rows_s, ad.transpose2d(rows_k)))
    return ad.matmul(att, rows_k), att


def lsa(x, mask, params):
    """Transfer boundary-context features onto shadow pixels.

    mask is a numpy array (n, 1, h, w) with entries in {0, 1}. Attention
    runs per batch element; an element with no shadow pixels (or no key
    pixels) keeps the plain conv_ns features, which keeps the graph
    differentiable in every case.
    """
    n, c, h, w = x.data.shape
    mask = np.asarray(mask)
    if mask.shape != (n, 1, h, w):
        raise ShapeError(f"mask shape {mask.shape} != {(n, 1, h, w)}")
    if params.downsample:
        m = min(params.m, h, w)
        xs = ad.resize(x, (m, m), "bilinear")
        ms = _binarize(_nearest_mask(mask, (m, m)))
    else:
        xs = x
        ms = mask
    shadow = ms[:, 0]
    if params.region == "boundary":
        keys = boundary_mask(ms, params.dilate_kernel)[:, 0]
    else:
        keys = 1.0 - shadow
    f_s = ad.conv2d(xs, params.conv_s)
    f_ns = ad.conv2d(xs, params.conv_ns)
    base = f_ns
    for b in range(n):
        idx_s = np.flatnonzero(shadow[b].reshape(-1) > 0.5)
        idx_k = np.flatnonzero(keys[b].reshape(-1) > 0.5)
        if idx_s.size == 0 or idx_k.size == 0:
            continue
        rows_s = ad.gather_pixels(f_s, b, idx_s)
        rows_k = ad.gather_pixels(f_ns, b, idx_k)
        moved, _ = attention_transfer(rows_s, rows_k)
        base = ad.paste_pixels(base, moved, b, idx_s)
    up = ad.resize(base, (h, w), "bilinear") if params.downsample else base
    return ad.conv2d(ad.concat_channels([x, up]), params.merge)


def _nearest_mask(mask, target):
    """Nearest-neighbor mask resize on raw numpy data (floor index rule)."""
    th, tw = target
    n, one, h, w = mask.shape
    ri = np.minimum((np.arange(th) * (h / th)).astype(np.intp), h - 1)
    ci = np.minimum((np.arange(tw) * (w / tw)).astype(np.intp), w - 1)
    return mask[:, :, ri][:, :, :, ci]

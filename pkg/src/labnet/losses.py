"""The three-term training objective.

total = mse + lambda1 * perceptual + lambda2 * gradient, all computed in
the network's normalized LAB domain. The perceptual term compares
feature maps from a pluggable fixed extractor; the shipped default is a
small random-weight conv stack with a frozen seed, standing in for a
pretrained backbone at desk scale.
"""
import numpy as np

from . import autodiff as ad
from .errors import ShapeError


class LossWeights:
    __slots__ = ("lambda1", "lambda2")

    def __init__(self, lambda1=10.0, lambda2=100.0):
        self.lambda1 = float(lambda1)
        self.lambda2 = float(lambda2)


class IdentityExtractor:
    """Features = the image itself; perceptual loss becomes plain MAE."""

    def __call__(self, x):
        return [x]


class RandomConvExtractor:
    """Fixed random 3x3 conv stack (3 -> 8 -> 16) with leaky activations.

    Weights are drawn once from a frozen seed and never trained, so the
    extractor is a deterministic function: the loss stays comparable
    across runs and processes.
    """

    def __init__(self, seed=0, widths=(8, 16), dtype=np.float32):
        rng = np.random.default_rng(seed)
        self.convs = []
        cin = 3
        for cout in widths:
            bound = np.sqrt(1.0 / (cin * 9))
            w = rng.uniform(-bound, bound, (cout, cin, 3, 3)).astype(dtype)
            self.convs.append(ad.ConvWeight(ad.Tensor(w),
                                            ad.Tensor(np.zeros(cout, dtype=dtype))))
            cin = cout

    def __call__(self, x):
        feats = []
        cur = x
        for cw in self.convs:
            cur = ad.leakyrelu(ad.conv2d(cur, cw), slope=0.2)
            feats.append(cur)
        return feats


_DEFAULT_EXTRACTOR = None


def default_extractor():
    global _DEFAULT_EXTRACTOR
    if _DEFAULT_EXTRACTOR is None:
        _DEFAULT_EXTRACTOR = RandomConvExtractor(seed=0)
    return _DEFAULT_EXTRACTOR


def _check_pair(pred, gt):
    if pred.data.shape != gt.data.shape:
        raise ShapeError(f"loss inputs differ: {pred.data.shape} vs {gt.data.shape}")


def mse_loss(pred, gt):
    _check_pair(pred, gt)
    return ad.tmean(ad.square(ad.add(pred, ad.mul(gt, -1.0))))


def grad_loss(pred, gt):
    """Mean absolute difference of the forward-difference gradient fields,
    averaged over the x and y directions."""
    _check_pair(pred, gt)
    parts = []
    for axis in (2, 3):
        dp = ad.forward_diff(pred, axis)
        dg = ad.forward_diff(gt, axis)
        parts.append(ad.tmean(ad.absolute(ad.add(dp, ad.mul(dg, -1.0)))))
    return ad.mul(ad.add(parts[0], parts[1]), 0.5)


def perceptual_loss(pred, gt, extractor=None):
    """Mean absolute feature difference, averaged over extractor stages."""
    _check_pair(pred, gt)
    extractor = extractor or default_extractor()
    fp = extractor(pred)
    fg = extractor(gt)
    total = None
    for a, b in zip(fp, fg):
        term = ad.tmean(ad.absolute(ad.add(a, ad.mul(b, -1.0))))
        total = term if total is None else ad.add(total, term)
    return ad.mul(total, 1.0 / len(fp))


def total_loss(pred, gt, weights=None, extractor=None):
    weights = weights or LossWeights()
    return ad.add(
        ad.add(mse_loss(pred, gt),
               ad.mul(perceptual_loss(pred, gt, extractor), weights.lambda1)),
        ad.mul(grad_loss(pred, gt), weights.lambda2))


def loss_breakdown(pred, gt, weights=None, extractor=None):
    """(total Tensor, component floats) with the total built from the parts,
    so backward() through it trains on exactly what gets logged."""
    weights = weights or LossWeights()
    m = mse_loss(pred, gt)
    p = perceptual_loss(pred, gt, extractor)
    g = grad_loss(pred, gt)
    total = ad.add(ad.add(m, ad.mul(p, weights.lambda1)),
                   ad.mul(g, weights.lambda2))
    return total, {"mse": float(m.data), "percep": float(p.data),
                   "grad": float(g.data), "total": float(total.data)}

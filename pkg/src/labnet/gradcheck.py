"""Central-difference gradient verification.

Perturbs each input entry by +/-eps in float64, rebuilds the forward
value, and compares the numeric slope against the analytic gradient from
the reverse pass. Relative error uses max(|analytic|, |numeric|, 1) in
the denominator so entries near zero are judged on absolute terms.
"""
import numpy as np

from .autodiff import Tensor, backward


def numeric_grad(fn, arrays, wrt, eps=1e-4):
    """Finite-difference d fn / d arrays[wrt].

    fn maps a list of float64 numpy arrays to a python float. Returns an
    array shaped like arrays[wrt].
    """
    base = [np.array(a, dtype=np.float64) for a in arrays]
    target = base[wrt]
    g = np.zeros_like(target)
    flat = target.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + eps
        fp = fn(base)
        flat[i] = keep - eps
        fm = fn(base)
        flat[i] = keep
        gflat[i] = (fp - fm) / (2.0 * eps)
    return g


def max_rel_err(analytic, numeric):
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1.0)
    return float(np.max(np.abs(a - n) / denom))


def check_op(build, arrays, eps=1e-4):
    """Compare analytic and numeric gradients of a scalar-producing graph.

    build takes a list of Tensors (float64, requires_grad set) and returns
    the scalar loss Tensor. Returns the worst relative error over every
    input. Inputs should be float64 for the comparison to be meaningful.
    """
    tensors = [Tensor(np.array(a, dtype=np.float64), requires_grad=True) for a in arrays]
    loss = build(tensors)
    backward(loss)

    def as_scalar(arrs):
        ts = [Tensor(a) for a in arrs]
        return float(build(ts).data)

    worst = 0.0
    for i, t in enumerate(tensors):
        num = numeric_grad(as_scalar, [t.data for t in tensors], i, eps=eps)
        ana = t.grad if t.grad is not None else np.zeros_like(t.data)
        worst = max(worst, max_rel_err(ana, num))
    return worst

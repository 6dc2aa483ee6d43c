"""Hand-rolled reference implementations the tests trust.

Everything here is written the slow, obvious way (explicit loops, float64)
so the fast vectorized code in the package can be judged against it.
"""
import numpy as np


def naive_conv2d(x, w, b, dilation):
    """Quadruple-loop dilated same-padding cross-correlation."""
    n, cin, h, ww = x.shape
    cout, cin2, kh, kw = w.shape
    assert cin == cin2
    pad = dilation * (kh - 1) // 2
    xp = np.zeros((n, cin, h + 2 * pad, ww + 2 * pad), dtype=np.float64)
    xp[:, :, pad:pad + h, pad:pad + ww] = x
    y = np.zeros((n, cout, h, ww), dtype=np.float64)
    for bi in range(n):
        for co in range(cout):
            for yy in range(h):
                for xx in range(ww):
                    acc = 0.0
                    for ci in range(cin):
                        for i in range(kh):
                            for j in range(kw):
                                acc += (w[co, ci, i, j]
                                        * xp[bi, ci, yy + i * dilation, xx + j * dilation])
                    y[bi, co, yy, xx] = acc + b[co]
    return y


def naive_matmul(a, b):
    m, k = a.shape
    k2, n = b.shape
    assert k == k2
    out = np.zeros((m, n), dtype=np.float64)
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for t in range(k):
                acc += a[i, t] * b[t, j]
            out[i, j] = acc
    return out


def rand(rng, *shape):
    return rng.standard_normal(shape)


def make_scene(size, seed, shade=0.45, penumbra=2):
    """Synthetic training triple: a smooth colorful scene, a rectangular
    shadow mask, and the same scene darkened inside the mask.

    The darkening is feathered over a few pixels like a real penumbra
    (pass penumbra=0 for a hard edge); the mask itself stays binary, the
    way real datasets annotate soft-edged shadows.

    Returns (shadow_rgb, mask, free_rgb) as float arrays, images in [0, 1].
    """
    rng = np.random.default_rng(seed)
    coarse = rng.random((4, 4, 3))
    yi = np.linspace(0, 3, size)
    xi = np.linspace(0, 3, size)
    y0 = np.floor(yi).astype(int).clip(0, 2)
    x0 = np.floor(xi).astype(int).clip(0, 2)
    fy = (yi - y0)[:, None, None]
    fx = (xi - x0)[None, :, None]
    c00 = coarse[y0][:, x0]
    c01 = coarse[y0][:, x0 + 1]
    c10 = coarse[y0 + 1][:, x0]
    c11 = coarse[y0 + 1][:, x0 + 1]
    free = ((1 - fy) * (1 - fx) * c00 + (1 - fy) * fx * c01
            + fy * (1 - fx) * c10 + fy * fx * c11)
    free = 0.15 + 0.7 * free
    mask = np.zeros((size, size))
    t, l = size // 4, size // 3
    mask[t:t + size // 2, l:l + size // 2] = 1.0
    soft = mask
    for _ in range(penumbra):
        blurred = soft.copy()
        blurred[1:-1, :] = 0.25 * soft[:-2, :] + 0.5 * soft[1:-1, :] \
            + 0.25 * soft[2:, :]
        soft = blurred
        blurred = soft.copy()
        blurred[:, 1:-1] = 0.25 * soft[:, :-2] + 0.5 * soft[:, 1:-1] \
            + 0.25 * soft[:, 2:]
        soft = blurred
    shadow = free * (1.0 - shade * soft[:, :, None])
    return shadow, mask, free


def make_conv(rng, cout, cin, k, dilation=1, scale=0.3):
    from labnet.autodiff import ConvWeight
    w = rng.standard_normal((cout, cin, k, k)) * scale
    b = rng.standard_normal(cout) * scale
    return ConvWeight(w, b, dilation)


def make_unit(rng, cin, cfg):
    from labnet.blocks import ElementaryUnitWeights, StageWeights
    stages = []
    cur = cin
    for rates in cfg.rates:
        convs = [make_conv(rng, ch, cur, 3, d)
                 for ch, d in zip(cfg.stage_channels, rates)]
        merge = make_conv(rng, cfg.merge_channels, cfg.concat_channels, 1)
        stages.append(StageWeights(convs, merge))
        cur = cfg.merge_channels
    return ElementaryUnitWeights(stages)


def make_istd_tree(root, ids, size=24, split="test", seed0=0):
    """Write a small A/B/C dataset tree; returns the per-id scene arrays.

    Images go through 8-bit PNG, so reloading them matches the returned
    arrays only after the same quantization.
    """
    from pathlib import Path

    from PIL import Image

    from labnet.data import save_image

    root = Path(root)
    scenes = {}
    for i, triple_id in enumerate(ids):
        shadow, mask, free = make_scene(size, seed=seed0 + i)
        save_image(shadow, root / f"{split}_A" / f"{triple_id}.png")
        save_image(free, root / f"{split}_C" / f"{triple_id}.png")
        (root / f"{split}_B").mkdir(parents=True, exist_ok=True)
        Image.fromarray((mask * 255).astype(np.uint8), mode="L").save(
            root / f"{split}_B" / f"{triple_id}.png")
        scenes[triple_id] = (shadow, mask, free)
    return scenes

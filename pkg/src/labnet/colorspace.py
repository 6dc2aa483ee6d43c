"""sRGB <-> CIELAB conversion and the network's channel packing.

Uses the D65 2-degree observer. The reference white is taken as the row
sums of the RGB->XYZ matrix, so neutral grays map to a = b = 0 exactly
and round trips stay clean. Images are channel-last float arrays in
[0, 1]; the network sees channel-first planes ordered (a, b, L) with
a and b divided by 128 and L by 100.
"""
import numpy as np

from .errors import ShapeError

RGB_TO_XYZ = np.array([
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
])
XYZ_TO_RGB = np.linalg.inv(RGB_TO_XYZ)
WHITE = RGB_TO_XYZ.sum(axis=1)

_DELTA3 = (6.0 / 29.0) ** 3
_SLOPE = 1.0 / (3.0 * (6.0 / 29.0) ** 2)


def srgb_to_linear(c):
    c = np.asarray(c, dtype=np.float64)
    return np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)


def linear_to_srgb(c):
    c = np.asarray(c, dtype=np.float64)
    c = np.clip(c, 0.0, None)
    return np.where(c <= 0.0031308, c * 12.92, 1.055 * c ** (1.0 / 2.4) - 0.055)


def _f(t):
    return np.where(t > _DELTA3, np.cbrt(t), _SLOPE * t + 4.0 / 29.0)


def _f_inv(u):
    cube = u ** 3
    return np.where(cube > _DELTA3, cube, (u - 4.0 / 29.0) / _SLOPE)


def rgb_to_lab(rgb):
    """(..., 3) sRGB in [0, 1] -> (..., 3) CIELAB (L in [0, 100])."""
    rgb = np.asarray(rgb)
    if rgb.shape[-1] != 3:
        raise ShapeError(f"expected trailing rgb axis of 3, got {rgb.shape}")
    xyz = srgb_to_linear(rgb) @ RGB_TO_XYZ.T
    fxyz = _f(xyz / WHITE)
    lab = np.empty_like(fxyz)
    lab[..., 0] = 116.0 * fxyz[..., 1] - 16.0
    lab[..., 1] = 500.0 * (fxyz[..., 0] - fxyz[..., 1])
    lab[..., 2] = 200.0 * (fxyz[..., 1] - fxyz[..., 2])
    return lab


def lab_to_rgb(lab):
    """Inverse of rgb_to_lab; out-of-gamut values clamp to [0, 1]."""
    lab = np.asarray(lab)
    if lab.shape[-1] != 3:
        raise ShapeError(f"expected trailing lab axis of 3, got {lab.shape}")
    fy = (lab[..., 0] + 16.0) / 116.0
    fx = fy + lab[..., 1] / 500.0
    fz = fy - lab[..., 2] / 200.0
    xyz = np.stack([_f_inv(fx), _f_inv(fy), _f_inv(fz)], axis=-1) * WHITE
    return np.clip(linear_to_srgb(xyz @ XYZ_TO_RGB.T), 0.0, 1.0)


# ---------------------------------------------------------------------------
# network packing: planes ordered (a, b, L), scaled to roughly [-1, 1]

AB_SCALE = 128.0
L_SCALE = 100.0


def rgb_image_to_net(rgb, dtype=np.float32):
    """(h, w, 3) sRGB in [0, 1] -> (3, h, w) scaled (a, b, L) planes."""
    lab = rgb_to_lab(rgb)
    out = np.empty((3,) + lab.shape[:-1], dtype=dtype)
    out[0] = lab[..., 1] / AB_SCALE
    out[1] = lab[..., 2] / AB_SCALE
    out[2] = lab[..., 0] / L_SCALE
    return out


def net_to_rgb_image(planes):
    """(3, h, w) scaled (a, b, L) planes -> (h, w, 3) sRGB in [0, 1]."""
    lab = np.empty(planes.shape[1:] + (3,), dtype=np.float64)
    lab[..., 0] = planes[2] * L_SCALE
    lab[..., 1] = planes[0] * AB_SCALE
    lab[..., 2] = planes[1] * AB_SCALE
    return lab_to_rgb(lab)


def net_to_lab_image(planes):
    """(3, h, w) scaled planes -> (h, w, 3) CIELAB, no gamut clamp."""
    lab = np.empty(planes.shape[1:] + (3,), dtype=np.float64)
    lab[..., 0] = planes[2] * L_SCALE
    lab[..., 1] = planes[0] * AB_SCALE
    lab[..., 2] = planes[1] * AB_SCALE
    return lab

"""Shadow-removal evaluation: masked LAB error, PSNR, SSIM, dataset reports.

The headline error metric in this literature is reported as "RMSE" but the
evaluation code the community shares actually computes the mean absolute
LAB difference.  Both variants are therefore computed everywhere: the
``mae`` field is that historical convention, ``rms`` is the literal root
mean square.  Errors are measured in raw LAB units (L in 0..100, a and b
roughly -128..127), never in the network's normalized space.

Regions come from the shadow mask: S selects mask = 1 pixels, NS selects
mask = 0, ALL ignores the mask.  SSIM values for a region average the
per-window SSIM map over windows centred inside the region.
"""

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import data as data_mod
from .colorspace import rgb_to_lab
from .errors import ArgumentError, EvalInputError

REGIONS = ("S", "NS", "ALL")
PSNR_CAP = 100.0

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_RANGE = 255.0


@dataclass(frozen=True)
class LabError:
    mae: float     # mean |pred - gt| over selected pixels and 3 channels
    rms: float     # sqrt(mean squared difference) over the same selection
    pixels: int    # selected pixel count (not multiplied by channels)


def _region_select(mask, region, shape):
    if region not in REGIONS:
        raise ArgumentError(f"region must be one of {REGIONS}, got {region!r}")
    if region == "ALL":
        return np.ones(shape, dtype=bool)
    mask = np.asarray(mask)
    if mask.shape != shape:
        raise ArgumentError(f"mask shape {mask.shape} does not match image {shape}")
    if not np.all((mask == 0) | (mask == 1)):
        raise ArgumentError("mask must be strictly binary")
    return mask == 1 if region == "S" else mask == 0


def lab_error(pred_lab, gt_lab, mask, region="ALL"):
    """Masked error between two (h, w, 3) raw LAB images.

    An empty region yields LabError(0, 0, 0); callers treat a zero pixel
    count as "region absent" rather than as a perfect score.
    """
    pred = np.asarray(pred_lab, dtype=np.float64)
    gt = np.asarray(gt_lab, dtype=np.float64)
    if pred.shape != gt.shape or pred.ndim != 3 or pred.shape[2] != 3:
        raise ArgumentError(
            f"expected matching (h, w, 3) LAB images, got {pred.shape} vs {gt.shape}")
    sel = _region_select(mask, region, pred.shape[:2])
    n = int(np.count_nonzero(sel))
    if n == 0:
        return LabError(0.0, 0.0, 0)
    diff = pred[sel] - gt[sel]
    mae = float(np.mean(np.abs(diff)))
    rms = float(math.sqrt(np.mean(diff * diff)))
    return LabError(mae, rms, n)


def psnr(pred, gt, mask=None, region="ALL"):
    """Peak signal-to-noise ratio in dB over 8-bit RGB values.

    Inputs are float images in [0, 1]; the error is scaled to 0..255
    levels before squaring.  Identical inputs report the 100 dB cap.
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ArgumentError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    sel = _region_select(mask, region, pred.shape[:2]) if mask is not None \
        else np.ones(pred.shape[:2], dtype=bool)
    if not np.count_nonzero(sel):
        return 0.0
    diff = (pred[sel] - gt[sel]) * 255.0
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(255.0 ** 2 / mse))


def _gaussian_window(size, sigma):
    half = (size - 1) / 2.0
    x = np.arange(size, dtype=np.float64) - half
    w = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return w / w.sum()


_SSIM_WIN = _gaussian_window(SSIM_WINDOW, SSIM_SIGMA)


def _filter_valid(img, win):
    # separable correlation, valid mode: output shrinks by win.size - 1
    k = win.size
    h, w = img.shape
    rows = np.zeros((h, w - k + 1), dtype=np.float64)
    for i in range(k):
        rows += win[i] * img[:, i:i + w - k + 1]
    out = np.zeros((h - k + 1, w - k + 1), dtype=np.float64)
    for i in range(k):
        out += win[i] * rows[i:i + h - k + 1, :]
    return out


def ssim_map(pred, gt):
    """Per-window SSIM over valid 11x11 positions, shape (h-10, w-10, 3)."""
    pred = np.asarray(pred, dtype=np.float64) * SSIM_RANGE
    gt = np.asarray(gt, dtype=np.float64) * SSIM_RANGE
    if pred.shape != gt.shape or pred.ndim != 3 or pred.shape[2] != 3:
        raise ArgumentError(
            f"expected matching (h, w, 3) images, got {pred.shape} vs {gt.shape}")
    h, w = pred.shape[:2]
    if h < SSIM_WINDOW or w < SSIM_WINDOW:
        raise ArgumentError(
            f"image {h}x{w} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    c1 = (SSIM_K1 * SSIM_RANGE) ** 2
    c2 = (SSIM_K2 * SSIM_RANGE) ** 2
    maps = []
    for c in range(3):
        x, y = pred[:, :, c], gt[:, :, c]
        mu_x = _filter_valid(x, _SSIM_WIN)
        mu_y = _filter_valid(y, _SSIM_WIN)
        var_x = _filter_valid(x * x, _SSIM_WIN) - mu_x * mu_x
        var_y = _filter_valid(y * y, _SSIM_WIN) - mu_y * mu_y
        cov = _filter_valid(x * y, _SSIM_WIN) - mu_x * mu_y
        num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
        den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
        maps.append(num / den)
    return np.stack(maps, axis=2)


def ssim(pred, gt, mask=None, region="ALL"):
    """Mean SSIM, per RGB channel then averaged; optionally region-masked."""
    smap = ssim_map(pred, gt)
    if mask is None or region == "ALL":
        return float(smap.mean())
    sel = _region_select(mask, region, np.asarray(pred).shape[:2])
    crop = SSIM_WINDOW // 2
    sel = sel[crop:-crop, crop:-crop]
    if not np.count_nonzero(sel):
        return 0.0
    return float(smap[sel].mean())


@dataclass
class RegionStats:
    mae: float = 0.0
    rms: float = 0.0
    psnr: float = 0.0
    ssim: float = 0.0
    pixels: int = 0
    images: int = 0


@dataclass
class MetricsReport:
    regions: dict               # region name -> RegionStats
    image_count: int
    omissions: tuple = ()
    aggregation: str = "per-image"
    note: str = "metrics computed at native ground-truth resolution"

    HEADER = ("Method",
              "S-RMSE", "S-PSNR", "S-SSIM",
              "NS-RMSE", "NS-PSNR", "NS-SSIM",
              "ALL-RMSE", "ALL-PSNR", "ALL-SSIM")

    def row(self, variant="mae"):
        vals = []
        for region in REGIONS:
            st = self.regions[region]
            err = st.mae if variant == "mae" else st.rms
            vals.extend([err, st.psnr, st.ssim])
        return vals

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["region", "images", "pixels", "mae", "rms", "psnr", "ssim"])
        for region in REGIONS:
            st = self.regions[region]
            w.writerow([region, st.images, st.pixels,
                        f"{st.mae:.6f}", f"{st.rms:.6f}",
                        f"{st.psnr:.6f}", f"{st.ssim:.6f}"])
        return buf.getvalue()

    def to_table(self, method="prediction"):
        rows = [list(self.HEADER),
                [method] + [f"{v:.2f}" for v in self.row("mae")],
                [f"{method} (rms)"] + [f"{v:.2f}" for v in self.row("rms")]]
        widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
        lines = [f"# {self.note}; aggregation: {self.aggregation}; "
                 f"images: {self.image_count}"]
        if self.omissions:
            lines.append(f"# omissions ({len(self.omissions)}): "
                         + ", ".join(self.omissions))
        for r in rows:
            lines.append("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip())
        return "\n".join(lines) + "\n"


def score_pair(pred_rgb, gt_rgb, mask):
    """All metrics for one prediction/ground-truth pair, per region."""
    pred_lab = rgb_to_lab(np.asarray(pred_rgb, dtype=np.float64))
    gt_lab = rgb_to_lab(np.asarray(gt_rgb, dtype=np.float64))
    out = {}
    for region in REGIONS:
        err = lab_error(pred_lab, gt_lab, mask, region)
        out[region] = RegionStats(
            mae=err.mae, rms=err.rms,
            psnr=psnr(pred_rgb, gt_rgb, mask, region),
            ssim=ssim(pred_rgb, gt_rgb, mask, region),
            pixels=err.pixels,
            images=1 if err.pixels else 0)
    return out


@dataclass
class _Pool:
    abs_sum: float = 0.0
    sq_sum: float = 0.0
    values: int = 0          # pixel count * 3 channels
    psnr_sq: float = 0.0     # squared 0..255 RGB error mass
    ssim_sum: float = 0.0    # per-window-value ssim mass
    ssim_n: int = 0
    pixels: int = 0
    images: int = 0
    # per-image metric sums, for the default aggregation
    mae_s: float = 0.0
    rms_s: float = 0.0
    psnr_s: float = 0.0
    ssim_s: float = 0.0


def evaluate_pairs(pairs, pooled=False):
    """Reduce (pred, gt, mask) pairs to a MetricsReport.

    ``pairs`` yields (pred_rgb, gt_rgb, mask) float arrays.  Default
    aggregation averages per-image metrics; ``pooled`` instead merges all
    pixels into one population before computing each metric.
    """
    pools = {r: _Pool() for r in REGIONS}
    count = 0
    for pred, gt, mask in pairs:
        count += 1
        pred_lab = rgb_to_lab(np.asarray(pred, dtype=np.float64))
        gt_lab = rgb_to_lab(np.asarray(gt, dtype=np.float64))
        smap = ssim_map(pred, gt)
        crop = SSIM_WINDOW // 2
        for region in REGIONS:
            p = pools[region]
            err = lab_error(pred_lab, gt_lab, mask, region)
            if err.pixels == 0:
                continue
            sel = _region_select(mask, region, np.asarray(pred).shape[:2])
            rgb_diff = (np.asarray(pred, dtype=np.float64)[sel]
                        - np.asarray(gt, dtype=np.float64)[sel]) * 255.0
            wsel = sel[crop:-crop, crop:-crop]
            wvals = smap[wsel]
            p.images += 1
            p.pixels += err.pixels
            p.values += err.pixels * 3
            p.abs_sum += err.mae * err.pixels * 3
            p.sq_sum += err.rms ** 2 * err.pixels * 3
            p.psnr_sq += float(np.sum(rgb_diff * rgb_diff))
            p.ssim_sum += float(wvals.sum())
            p.ssim_n += wvals.size
            p.mae_s += err.mae
            p.rms_s += err.rms
            p.psnr_s += psnr(pred, gt, mask, region)
            p.ssim_s += float(wvals.mean()) if wvals.size else 0.0
    regions = {}
    for region, p in pools.items():
        if p.images == 0:
            regions[region] = RegionStats()
            continue
        if pooled:
            mse = p.psnr_sq / (p.values or 1)
            regions[region] = RegionStats(
                mae=p.abs_sum / p.values,
                rms=math.sqrt(p.sq_sum / p.values),
                psnr=PSNR_CAP if mse == 0.0 else
                     min(PSNR_CAP, 10.0 * math.log10(255.0 ** 2 / mse)),
                ssim=p.ssim_sum / (p.ssim_n or 1),
                pixels=p.pixels, images=p.images)
        else:
            regions[region] = RegionStats(
                mae=p.mae_s / p.images, rms=p.rms_s / p.images,
                psnr=p.psnr_s / p.images, ssim=p.ssim_s / p.images,
                pixels=p.pixels, images=p.images)
    return MetricsReport(regions=regions, image_count=count,
                         aggregation="pooled" if pooled else "per-image")


def evaluate_dataset(pred_dir, index, pooled=False, target_size=None):
    """Score a directory of predictions against an indexed test split.

    Predictions are matched to triples by filename stem.  Missing
    predictions land in the report's omissions list and their images are
    excluded; the caller decides the exit status.  Predictions whose size
    differs from the ground truth are bilinearly resized to match.
    """
    if not index.ids:
        raise EvalInputError("dataset index is empty")
    found = []
    omissions = []
    for triple_id in index.ids:
        p = data_mod.find_image(pred_dir, triple_id)
        if p is None:
            omissions.append(triple_id)
        else:
            found.append((triple_id, p))
    if not found:
        raise EvalInputError(
            f"no predictions in {pred_dir} match the {len(index.ids)} dataset ids")
    resized = []

    def pairs():
        for triple_id, pred_path in found:
            triple = data_mod.load_triple(index, triple_id, target_size)
            gt_hw = triple.free.shape[:2]
            pred = data_mod.load_image(pred_path)
            if pred.shape[:2] != gt_hw:
                pred = data_mod.load_image(pred_path, target_size=gt_hw)
                resized.append(triple_id)
            yield pred, triple.free, triple.mask

    report = evaluate_pairs(pairs(), pooled=pooled)
    report.omissions = tuple(omissions)
    if resized:
        report.note += (f"; {len(resized)} prediction(s) bilinearly resized "
                        "to the ground-truth size")
    return report

import math

import numpy as np
import pytest
from scipy.signal import convolve2d

from labnet.colorspace import rgb_to_lab
from labnet.data import save_image, scan, istd_layout
from labnet.errors import ArgumentError
from labnet.metrics import (LabError, MetricsReport, evaluate_dataset,
                            evaluate_pairs, lab_error, psnr, score_pair, ssim,
                            ssim_map)

from helpers import make_istd_tree, make_scene


def lab_pair(seed, size=24):
    rng = np.random.default_rng(seed)
    pred = rng.random((size, size, 3)) * [100, 200, 200] - [0, 100, 100]
    gt = rng.random((size, size, 3)) * [100, 200, 200] - [0, 100, 100]
    mask = (rng.random((size, size)) < 0.4).astype(np.float64)
    return pred, gt, mask


def rgb_pair(seed, size=24, lo=0.3, hi=0.7):
    rng = np.random.default_rng(seed)
    pred = lo + (hi - lo) * rng.random((size, size, 3))
    gt = lo + (hi - lo) * rng.random((size, size, 3))
    mask = np.zeros((size, size))
    mask[4:16, 6:20] = 1.0
    return pred, gt, mask


# --------------------------------------------------------------- lab_error

def test_identical_images_zero_error():
    pred, _, mask = lab_pair(0)
    for region in ("S", "NS", "ALL"):
        err = lab_error(pred, pred, mask, region)
        assert err.mae == 0.0
        assert err.rms == 0.0
        assert err.pixels > 0


def test_uniform_l_offset_closed_form():
    # +3 on L only: |diff| averages to 1 over the three channels,
    # squared averages to 3 so the rms variant is sqrt(3)
    _, gt, mask = lab_pair(1)
    pred = gt.copy()
    pred[:, :, 0] += 3.0
    for region in ("S", "NS", "ALL"):
        err = lab_error(pred, gt, mask, region)
        assert abs(err.mae - 1.0) < 1e-12
        assert abs(err.rms - 1.7320508075688772) < 1e-12


def test_lab_error_matches_loop_oracle():
    pred, gt, mask = lab_pair(2, size=9)
    for region in ("S", "NS", "ALL"):
        abs_sum = sq_sum = n = 0
        for i in range(9):
            for j in range(9):
                inside = mask[i, j] == 1
                if region == "S" and not inside:
                    continue
                if region == "NS" and inside:
                    continue
                n += 1
                for c in range(3):
                    d = pred[i, j, c] - gt[i, j, c]
                    abs_sum += abs(d)
                    sq_sum += d * d
        err = lab_error(pred, gt, mask, region)
        assert err.pixels == n
        assert abs(err.mae - abs_sum / (3 * n)) < 1e-9
        assert abs(err.rms - math.sqrt(sq_sum / (3 * n))) < 1e-9


def test_empty_region_reports_zero_count():
    pred, gt, _ = lab_pair(3)
    all_shadow = np.ones(pred.shape[:2])
    err = lab_error(pred, gt, all_shadow, "NS")
    assert err == LabError(0.0, 0.0, 0)


def test_region_mass_decomposition():
    # S and NS error masses must sum exactly to the ALL mass
    pred, gt, mask = lab_pair(4)
    s = lab_error(pred, gt, mask, "S")
    ns = lab_error(pred, gt, mask, "NS")
    al = lab_error(pred, gt, mask, "ALL")
    assert s.pixels + ns.pixels == al.pixels
    abs_mass = s.mae * s.pixels + ns.mae * ns.pixels
    sq_mass = s.rms ** 2 * s.pixels + ns.rms ** 2 * ns.pixels
    assert abs(abs_mass - al.mae * al.pixels) < 1e-9 * abs(abs_mass)
    assert abs(sq_mass - al.rms ** 2 * al.pixels) < 1e-9 * abs(sq_mass)


def test_mae_never_exceeds_rms():
    for seed in range(5):
        pred, gt, mask = lab_pair(10 + seed)
        for region in ("S", "NS", "ALL"):
            err = lab_error(pred, gt, mask, region)
            assert err.mae <= err.rms + 1e-12


def test_lab_error_validates_inputs():
    pred, gt, mask = lab_pair(5)
    with pytest.raises(ArgumentError):
        lab_error(pred[:10], gt, mask)
    with pytest.raises(ArgumentError):
        lab_error(pred, gt, mask, "shadow")
    with pytest.raises(ArgumentError):
        lab_error(pred, gt, mask * 0.5, "S")


# -------------------------------------------------------------------- psnr

def test_psnr_identical_is_capped():
    pred, _, _ = rgb_pair(0)
    assert psnr(pred, pred) == 100.0


def test_psnr_full_scale_error_is_zero():
    black = np.zeros((8, 8, 3))
    white = np.ones((8, 8, 3))
    assert abs(psnr(black, white)) < 1e-12


def test_psnr_one_level_error():
    _, gt, _ = rgb_pair(1)
    pred = gt + 1.0 / 255.0
    assert abs(psnr(pred, gt) - 48.1308036086791) < 1e-10


def test_psnr_region_uses_masked_pixels_only():
    _, gt, mask = rgb_pair(2)
    pred = gt.copy()
    pred[mask == 1] += 10.0 / 255.0   # damage only the shadow region
    assert psnr(pred, gt, mask, "NS") == 100.0
    assert psnr(pred, gt, mask, "S") < 30.0
    assert psnr(pred, gt, mask, "S") < psnr(pred, gt, mask, "ALL")


# -------------------------------------------------------------------- ssim

def reference_ssim(pred, gt):
    # independent dense-window implementation on top of scipy
    x1 = np.arange(11) - 5.0
    w1 = np.exp(-(x1 * x1) / (2 * 1.5 ** 2))
    w1 /= w1.sum()
    win = np.outer(w1, w1)
    c1 = (0.01 * 255) ** 2
    c2 = (0.03 * 255) ** 2
    vals = []
    for c in range(3):
        x = pred[:, :, c].astype(np.float64) * 255
        y = gt[:, :, c].astype(np.float64) * 255
        mu_x = convolve2d(x, win, mode="valid")
        mu_y = convolve2d(y, win, mode="valid")
        sxx = convolve2d(x * x, win, mode="valid") - mu_x ** 2
        syy = convolve2d(y * y, win, mode="valid") - mu_y ** 2
        sxy = convolve2d(x * y, win, mode="valid") - mu_x * mu_y
        m = ((2 * mu_x * mu_y + c1) * (2 * sxy + c2)
             / ((mu_x ** 2 + mu_y ** 2 + c1) * (sxx + syy + c2)))
        vals.append(m.mean())
    return float(np.mean(vals))


def test_ssim_identical_is_one():
    pred, _, _ = rgb_pair(3)
    assert ssim(pred, pred) == 1.0


def test_ssim_matches_reference_oracle():
    pred, gt, _ = rgb_pair(4)
    assert abs(ssim(pred, gt) - reference_ssim(pred, gt)) < 1e-9


def test_ssim_structural_inversion_scores_low():
    _, gt, _ = rgb_pair(5)
    pred = 1.0 - gt   # 255 - gt at level scale
    val = ssim(pred, gt)
    assert val < 0.5
    assert abs(val - reference_ssim(pred, gt)) < 1e-9


def test_ssim_is_symmetric():
    pred, gt, _ = rgb_pair(6)
    assert ssim(pred, gt) == ssim(gt, pred)


def test_ssim_rejects_undersized_images():
    img = np.zeros((10, 32, 3))
    with pytest.raises(ArgumentError, match="smaller"):
        ssim(img, img)


def test_ssim_map_shape_and_region_crop():
    pred, gt, mask = rgb_pair(7)
    smap = ssim_map(pred, gt)
    assert smap.shape == (14, 14, 3)
    # an all-ones mask makes the S region identical to ALL
    ones = np.ones(mask.shape)
    assert ssim(pred, gt, ones, "S") == ssim(pred, gt)


# -------------------------------------------------- aggregation and report

def test_score_pair_regions_consistent():
    pred, gt, mask = rgb_pair(8)
    scores = score_pair(pred, gt, mask)
    assert scores["S"].pixels + scores["NS"].pixels == scores["ALL"].pixels
    got = lab_error(rgb_to_lab(pred.astype(np.float64)),
                    rgb_to_lab(gt.astype(np.float64)), mask, "S")
    assert scores["S"].mae == got.mae


def test_evaluate_pairs_single_image_pooled_equals_per_image():
    pred, gt, mask = rgb_pair(9)
    a = evaluate_pairs([(pred, gt, mask)], pooled=False)
    b = evaluate_pairs([(pred, gt, mask)], pooled=True)
    for region in ("S", "NS", "ALL"):
        assert abs(a.regions[region].mae - b.regions[region].mae) < 1e-12
        assert abs(a.regions[region].rms - b.regions[region].rms) < 1e-12
        assert abs(a.regions[region].psnr - b.regions[region].psnr) < 1e-10
        assert abs(a.regions[region].ssim - b.regions[region].ssim) < 1e-12


def test_evaluate_pairs_order_invariant():
    pairs = [rgb_pair(20 + s) for s in range(3)]
    fwd = evaluate_pairs(pairs)
    rev = evaluate_pairs(pairs[::-1])
    for region in ("S", "NS", "ALL"):
        assert np.isclose(fwd.regions[region].mae, rev.regions[region].mae,
                          rtol=1e-12)
        assert fwd.regions[region].pixels == rev.regions[region].pixels


def test_evaluate_pairs_skips_absent_region():
    pred, gt, _ = rgb_pair(10)
    ones = np.ones(pred.shape[:2])
    rep = evaluate_pairs([(pred, gt, ones)])
    assert rep.regions["NS"].images == 0
    assert rep.regions["NS"].pixels == 0
    assert rep.regions["S"].images == 1


def test_report_table_and_csv_shape():
    pred, gt, mask = rgb_pair(11)
    rep = evaluate_pairs([(pred, gt, mask)])
    table = rep.to_table("mymethod")
    assert "Method" in table and "ALL-SSIM" in table
    assert "mymethod (rms)" in table
    lines = rep.to_csv().strip().splitlines()
    assert lines[0] == "region,images,pixels,mae,rms,psnr,ssim"
    assert len(lines) == 4


# ------------------------------------------------------- dataset evaluation

IDS = ("1-1", "1-2", "2-1")


@pytest.fixture()
def dataset(tmp_path):
    scenes = make_istd_tree(tmp_path, IDS, size=24)
    idx = scan(tmp_path, istd_layout("test"))
    return tmp_path, idx, scenes


def test_evaluate_gt_against_itself_is_perfect(dataset, tmp_path):
    root, idx, scenes = dataset
    pred_dir = tmp_path / "preds"
    for triple_id, (_, _, free) in scenes.items():
        save_image(free, pred_dir / f"{triple_id}.png")
    rep = evaluate_dataset(pred_dir, idx)
    assert rep.image_count == 3
    assert rep.omissions == ()
    for region in ("S", "NS", "ALL"):
        assert rep.regions[region].mae == 0.0
        assert rep.regions[region].psnr == 100.0
        assert rep.regions[region].ssim == 1.0


def test_evaluate_shadow_inputs_show_shadow_error(dataset):
    root, idx, _ = dataset
    # the shadow images themselves act as the prediction baseline
    rep = evaluate_dataset(root / "test_A", idx)
    assert rep.regions["S"].mae > rep.regions["NS"].mae
    assert rep.regions["S"].mae > 1.0


def test_evaluate_reports_omissions(dataset, tmp_path):
    root, idx, scenes = dataset
    pred_dir = tmp_path / "partial"
    for triple_id in IDS[:2]:
        save_image(scenes[triple_id][2], pred_dir / f"{triple_id}.png")
    rep = evaluate_dataset(pred_dir, idx)
    assert rep.omissions == ("2-1",)
    assert rep.image_count == 2
    assert "omissions" in rep.to_table()


def test_evaluate_resizes_mismatched_predictions(dataset, tmp_path):
    root, idx, scenes = dataset
    pred_dir = tmp_path / "small"
    for triple_id, (_, _, free) in scenes.items():
        save_image(free[::2, ::2], pred_dir / f"{triple_id}.png")
    rep = evaluate_dataset(pred_dir, idx)
    # upscaled predictions evaluate without error, imperfectly
    assert rep.image_count == 3
    assert rep.regions["ALL"].mae > 0.0

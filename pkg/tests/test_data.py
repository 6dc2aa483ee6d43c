import numpy as np
import pytest
from PIL import Image

from labnet.data import (DatasetLayout, find_image, istd_layout, load_image,
                         load_mask, load_triple, save_image, scan)
from labnet.errors import ArgumentError, DatasetError

from helpers import make_istd_tree

IDS = ("10-3", "2-1", "7-2")


@pytest.fixture()
def tree(tmp_path):
    scenes = make_istd_tree(tmp_path, IDS, size=24)
    return tmp_path, scenes


def test_scan_sorts_ids(tree):
    root, _ = tree
    idx = scan(root, istd_layout("test"))
    assert idx.ids == tuple(sorted(IDS))
    assert len(idx) == 3


def test_scan_is_deterministic(tree):
    root, _ = tree
    a = scan(root, istd_layout("test"))
    b = scan(root, istd_layout("test"))
    assert a.ids == b.ids
    assert a.paths(a.ids[0]) == b.paths(b.ids[0])


def test_scan_skips_orphans(tree, caplog):
    root, _ = tree
    # a shadow image with no mask or gt must not produce a triple
    save_image(np.zeros((8, 8, 3)), root / "test_A" / "orphan.png")
    with caplog.at_level("WARNING", logger="labnet.data"):
        idx = scan(root, istd_layout("test"))
    assert "orphan" not in idx.ids
    assert len(idx) == 3
    assert any("unmatched" in r.message for r in caplog.records)


def test_scan_empty_intersection_reports_counts(tmp_path):
    save_image(np.zeros((8, 8, 3)), tmp_path / "test_A" / "a.png")
    save_image(np.zeros((8, 8, 3)), tmp_path / "test_C" / "b.png")
    (tmp_path / "test_B").mkdir()
    with pytest.raises(DatasetError, match="0 images"):
        scan(tmp_path, istd_layout("test"))


def test_scan_missing_root(tmp_path):
    with pytest.raises(DatasetError, match="does not exist"):
        scan(tmp_path / "nope", istd_layout("test"))


def test_layout_split_validation():
    with pytest.raises(ArgumentError):
        istd_layout("validation")


def test_layout_absolute_dir_overrides_root(tmp_path):
    # masks may live outside the dataset root
    outside = tmp_path / "elsewhere"
    layout = DatasetLayout("test_A", str(outside / "masks"), "test_C")
    resolved = layout.resolve(tmp_path / "root")
    assert resolved[0] == tmp_path / "root" / "test_A"
    assert resolved[1] == outside / "masks"


def test_mask_threshold_rule(tmp_path):
    gray = np.full((6, 6), 30, dtype=np.uint8)
    gray[:3] = 200
    gray[0, 0] = 127
    gray[0, 1] = 128
    p = tmp_path / "m.png"
    Image.fromarray(gray, mode="L").save(p)
    mask = load_mask(p)
    assert mask[0, 0] == 0.0   # 127 is below the cut
    assert mask[0, 1] == 1.0   # 128 is inside
    assert mask[1, 1] == 1.0
    assert mask[4, 4] == 0.0
    assert set(np.unique(mask)) <= {0.0, 1.0}


def test_antialiased_mask_matches_loop_oracle(tmp_path):
    rng = np.random.default_rng(3)
    gray = (rng.random((16, 16)) * 255).astype(np.uint8)
    p = tmp_path / "aa.png"
    Image.fromarray(gray, mode="L").save(p)
    mask = load_mask(p)
    want = sum(1 for v in gray.ravel() if int(v) >= 128)
    assert int(mask.sum()) == want


def test_load_native_size_is_byte_identical(tree):
    root, _ = tree
    idx = scan(root, istd_layout("test"))
    raw = np.asarray(Image.open(root / "test_A" / f"{idx.ids[0]}.png"))
    t = load_triple(idx, idx.ids[0])
    assert np.array_equal(np.rint(t.shadow * 255).astype(np.uint8), raw)


def test_load_triple_resizes_all_components(tree):
    root, _ = tree
    idx = scan(root, istd_layout("test"))
    t = load_triple(idx, idx.ids[0], target_size=16)
    assert t.shadow.shape == (16, 16, 3)
    assert t.free.shape == (16, 16, 3)
    assert t.mask.shape == (16, 16)
    assert set(np.unique(t.mask)) <= {0.0, 1.0}


def test_load_triple_rectangular_target(tree):
    root, _ = tree
    idx = scan(root, istd_layout("test"))
    t = load_triple(idx, idx.ids[0], target_size=(12, 20))
    assert t.shadow.shape == (12, 20, 3)
    assert t.mask.shape == (12, 20)


def test_load_triple_unknown_id(tree):
    root, _ = tree
    idx = scan(root, istd_layout("test"))
    with pytest.raises(DatasetError, match="unknown"):
        load_triple(idx, "missing-id")


def test_undecodable_file_names_the_path(tmp_path):
    p = tmp_path / "broken.png"
    p.write_bytes(b"not a png at all")
    with pytest.raises(DatasetError, match="broken.png"):
        load_image(p)


def test_save_load_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    img = rng.integers(0, 256, size=(9, 7, 3)).astype(np.float64) / 255.0
    p = tmp_path / "x.png"
    save_image(img, p)
    back = load_image(p)
    assert np.array_equal(np.rint(back * 255), np.rint(img * 255))


def test_save_one_pixel_image(tmp_path):
    p = tmp_path / "one.png"
    save_image(np.array([[[0.2, 0.5, 0.9]]]), p)
    back = load_image(p)
    assert back.shape == (1, 1, 3)


def test_save_clips_out_of_range(tmp_path):
    img = np.array([[[-0.5, 0.5, 1.5]]])
    p = tmp_path / "clip.png"
    save_image(img, p)
    back = load_image(p)
    assert back[0, 0, 0] == 0.0
    assert back[0, 0, 2] == 1.0


def test_save_rejects_bad_shape(tmp_path):
    with pytest.raises(ArgumentError):
        save_image(np.zeros((4, 4)), tmp_path / "bad.png")


def test_find_image_tries_extensions(tmp_path):
    save_image(np.zeros((2, 2, 3)), tmp_path / "a.png")
    assert find_image(tmp_path, "a") is not None
    assert find_image(tmp_path, "b") is None

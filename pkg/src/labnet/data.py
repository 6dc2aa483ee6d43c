"""Dataset scanning and image I/O for shadow triple datasets.

A dataset lives under a root directory with three subdirectories holding
shadow images, binary shadow masks, and shadow-free ground truth.  Files
are matched across the three directories by filename stem, so the shadow
image ``90-1.png`` pairs with the mask ``90-1.png`` and the ground truth
``90-1.png`` regardless of extension differences between directories.
"""

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ArgumentError, DatasetError

log = logging.getLogger("labnet.data")

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp")


@dataclass(frozen=True)
class DatasetLayout:
    """Subdirectory names for the three triple components.

    Entries may be absolute paths, which lets masks live outside the
    dataset root (some distributions ship them separately).
    """

    shadow_dir: str
    mask_dir: str
    free_dir: str

    def resolve(self, root):
        root = Path(root)
        out = []
        for d in (self.shadow_dir, self.mask_dir, self.free_dir):
            p = Path(d)
            out.append(p if p.is_absolute() else root / p)
        return tuple(out)


def istd_layout(split):
    """Standard A/B/C naming: A = shadow, B = mask, C = shadow-free."""
    if split not in ("train", "test"):
        raise ArgumentError(f"split must be 'train' or 'test', got {split!r}")
    return DatasetLayout(f"{split}_A", f"{split}_B", f"{split}_C")


@dataclass(frozen=True)
class ShadowTriple:
    shadow: np.ndarray  # (h, w, 3) float32 in [0, 1]
    mask: np.ndarray    # (h, w) float32 strictly {0, 1}, 1 inside shadow
    free: np.ndarray    # (h, w, 3) float32 in [0, 1]
    id: str


@dataclass(frozen=True)
class DatasetIndex:
    root: Path
    layout: DatasetLayout
    ids: tuple
    # stem -> filename, per component directory
    _files: tuple

    def __len__(self):
        return len(self.ids)

    def paths(self, triple_id):
        if triple_id not in self._files[0]:
            raise DatasetError(f"unknown triple id {triple_id!r}")
        dirs = self.layout.resolve(self.root)
        return tuple(d / files[triple_id] for d, files in zip(dirs, self._files))


def _list_images(directory):
    if not directory.is_dir():
        return {}
    out = {}
    for p in sorted(directory.iterdir()):
        if p.suffix.lower() in IMAGE_EXTENSIONS:
            out[p.stem] = p.name
    return out


def scan(root, layout):
    """Index every triple id present in all three layout directories.

    Ids are sorted lexicographically, so scanning the same tree twice
    yields identical indices.  Stems present in only some directories are
    logged and skipped.
    """
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"dataset root {root} does not exist")
    dirs = layout.resolve(root)
    maps = [_list_images(d) for d in dirs]
    common = sorted(set(maps[0]) & set(maps[1]) & set(maps[2]))
    if not common:
        counts = ", ".join(f"{d}: {len(m)} images" for d, m in zip(dirs, maps))
        raise DatasetError(f"no complete triples under {root} ({counts})")
    for d, m in zip(dirs, maps):
        orphans = sorted(set(m) - set(common))
        if orphans:
            log.warning("%s: %d unmatched image(s), e.g. %s",
                        d, len(orphans), orphans[0])
    files = tuple({stem: m[stem] for stem in common} for m in maps)
    return DatasetIndex(root=root, layout=layout, ids=tuple(common), _files=files)


def _decode(path):
    try:
        with Image.open(path) as im:
            im.load()
            return im
    except (OSError, SyntaxError) as exc:
        raise DatasetError(f"cannot decode image file {path}: {exc}") from exc


def load_image(path, target_size=None):
    """Decode an RGB image to a (h, w, 3) float32 array in [0, 1]."""
    im = _decode(path).convert("RGB")
    if target_size is not None:
        im = im.resize(_size_wh(target_size), Image.BILINEAR)
    return np.asarray(im, dtype=np.float32) / 255.0


def load_mask(path, target_size=None):
    """Decode a mask to a (h, w) float32 plane, 1 where the shadow is.

    Resizing uses nearest neighbour so no new gray levels appear; the
    threshold at 128 of 255 then binarizes whatever antialiasing the file
    itself carries.
    """
    im = _decode(path).convert("L")
    if target_size is not None:
        im = im.resize(_size_wh(target_size), Image.NEAREST)
    gray = np.asarray(im)
    return (gray >= 128).astype(np.float32)


def _size_wh(target_size):
    # accepts an int (square) or an (h, w) pair; PIL wants (w, h)
    if isinstance(target_size, int):
        return (target_size, target_size)
    h, w = target_size
    return (int(w), int(h))


def load_triple(index, triple_id, target_size=None):
    shadow_p, mask_p, free_p = index.paths(triple_id)
    shadow = load_image(shadow_p, target_size)
    free = load_image(free_p, target_size)
    mask = load_mask(mask_p, target_size)
    if shadow.shape != free.shape or mask.shape != shadow.shape[:2]:
        raise DatasetError(
            f"triple {triple_id!r}: component dimensions disagree "
            f"(shadow {shadow.shape[:2]}, mask {mask.shape}, free {free.shape[:2]}); "
            "pass target_size to force a common size")
    return ShadowTriple(shadow=shadow, mask=mask, free=free, id=triple_id)


def load_split(index, target_size=None):
    """Load every triple in the index, in id order."""
    return [load_triple(index, t, target_size) for t in index.ids]


def save_image(img, path):
    """Write a float [0, 1] RGB array as an 8-bit PNG."""
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ArgumentError(f"expected (h, w, 3) image, got shape {img.shape}")
    data = np.rint(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(data, mode="RGB").save(path, format="PNG")
    except OSError as exc:
        raise DatasetError(f"cannot write image file {path}: {exc}") from exc


def find_image(directory, stem):
    """Locate an image file by stem, trying the known extensions."""
    directory = Path(directory)
    for ext in IMAGE_EXTENSIONS:
        for candidate in (directory / f"{stem}{ext}",
                          directory / f"{stem}{ext.upper()}"):
            if candidate.is_file():
                return candidate
    return None

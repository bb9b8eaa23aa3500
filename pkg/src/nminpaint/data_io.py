"""Dataset ingestion and PNG plumbing.

Normal maps live on disk as 8-bit RGB PNGs.  Background pixels are written
as literal (0, 0, 0) bytes — the dataset convention — and decode back to the
canonical background direction; the foreground mask is either a grayscale
companion file (``masks/<stem>.png``, >= 128 = foreground) or derived as
"pixel != (0, 0, 0)".  Occlusion masks are grayscale PNGs with 255 = known.

Directory layout::

    <root>/<split>/*.png
    <root>/<split>/masks/*.png   (optional, matching stems)
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
from PIL import Image, UnidentifiedImageError

from .core import BACKGROUND, NormalMap, OcclusionMask, normal_to_rgb, rgb_to_normal, unit_normalize
from .augment import _bilinear_sample


class DatasetError(RuntimeError):
    """Raised for missing directories, undecodable files, or bad dimensions."""


@dataclass(frozen=True)
class DatasetManifest:
    root: Path
    split: Optional[str]
    entries: List[Tuple[Path, Optional[Path]]]
    image_size: Tuple[int, int]  # (height, width)


def _atomic_save(image: Image.Image, path: Path):
    tmp = path.with_name(path.name + ".tmp")
    image.save(tmp, format="PNG")
    os.replace(tmp, path)


def save_normal_map(m: NormalMap, path) -> None:
    """Write a normal map as an 8-bit RGB PNG (background as exact black)."""
    path = Path(path)
    rgb = normal_to_rgb(m.vectors)
    if m.foreground is not None:
        rgb[~m.foreground] = 0
    _atomic_save(Image.fromarray(rgb, mode="RGB"), path)


def load_normal_map(path, mask_path=None) -> NormalMap:
    """Decode a normal-map PNG, deriving the foreground when no mask exists."""
    path = Path(path)
    try:
        with Image.open(path) as img:
            rgb = np.asarray(img.convert("RGB"), dtype=np.uint8)
    except (OSError, UnidentifiedImageError, ValueError) as exc:
        raise DatasetError(f"{path}: cannot decode PNG ({exc})") from exc
    if mask_path is not None:
        try:
            with Image.open(mask_path) as img:
                gray = np.asarray(img.convert("L"), dtype=np.uint8)
        except (OSError, UnidentifiedImageError, ValueError) as exc:
            raise DatasetError(f"{mask_path}: cannot decode mask PNG ({exc})") from exc
        if gray.shape != rgb.shape[:2]:
            raise DatasetError(f"{mask_path}: mask shape {gray.shape} does not "
                               f"match image {rgb.shape[:2]}")
        fg = gray >= 128
    else:
        fg = np.any(rgb != 0, axis=-1)
    vectors = rgb_to_normal(rgb).astype(np.float32)
    vectors[~fg] = BACKGROUND
    return NormalMap(vectors, fg)


def resize_normal_map(m: NormalMap, height: int, width: int) -> NormalMap:
    """Bilinear resize of the vector field with re-normalization.

    The foreground mask is resized with nearest-neighbor sampling and the
    background is restored afterwards.
    """
    if (m.height, m.width) == (height, width):
        return m
    sy = m.height / height
    sx = m.width / width
    jj, ii = np.meshgrid(np.arange(width, dtype=np.float64),
                         np.arange(height, dtype=np.float64))
    src_x = (jj + 0.5) * sx - 0.5
    src_y = (ii + 0.5) * sy - 0.5
    sampled, _ = _bilinear_sample(m.vectors, np.clip(src_x, 0, m.width - 1),
                                  np.clip(src_y, 0, m.height - 1))
    vectors = unit_normalize(sampled).astype(np.float32)
    fg_src = m.foreground_or_all()
    nx = np.clip(np.rint(src_x), 0, m.width - 1).astype(np.intp)
    ny = np.clip(np.rint(src_y), 0, m.height - 1).astype(np.intp)
    fg = fg_src[ny, nx]
    vectors[~fg] = BACKGROUND
    return NormalMap(vectors, fg)


def build_manifest(root, split: Optional[str] = None) -> DatasetManifest:
    """Scan a dataset directory into a manifest with stable ordering."""
    root = Path(root)
    directory = root / split if split else root
    if not directory.is_dir():
        raise DatasetError(f"{directory}: dataset directory does not exist")
    files = sorted(p for p in directory.iterdir()
                   if p.is_file() and p.suffix.lower() == ".png")
    if not files:
        raise DatasetError(f"{directory}: no PNG files found")
    mask_dir = directory / "masks"
    entries = []
    for f in files:
        mask = mask_dir / f.name
        entries.append((f, mask if mask.is_file() else None))
    return DatasetManifest(root=root, split=split, entries=entries,
                           image_size=(0, 0))


def load_dataset(root, split: Optional[str] = None,
                 target_size: Optional[int] = None) -> List[NormalMap]:
    """Load every normal-map PNG under ``root[/split]`` in lexicographic order.

    All images must share one size after the optional resize; a corrupt file
    aborts the load with an error naming it.
    """
    manifest = build_manifest(root, split)
    maps = []
    shape = None
    for img_path, mask_path in manifest.entries:
        m = load_normal_map(img_path, mask_path)
        if target_size is not None:
            m = resize_normal_map(m, target_size, target_size)
        if shape is None:
            shape = (m.height, m.width)
        elif (m.height, m.width) != shape:
            raise DatasetError(f"{img_path}: size {(m.height, m.width)} does "
                               f"not match the rest of the dataset {shape}")
        maps.append(m)
    return maps


def save_mask_png(mask: OcclusionMask, path) -> None:
    """Write an occlusion mask as grayscale PNG (255 = known, 0 = occluded)."""
    path = Path(path)
    gray = (mask.values * 255).astype(np.uint8)
    _atomic_save(Image.fromarray(gray, mode="L"), path)


def load_mask_png(path) -> OcclusionMask:
    """Read a grayscale occlusion mask (>= 128 counts as known)."""
    path = Path(path)
    try:
        with Image.open(path) as img:
            gray = np.asarray(img.convert("L"), dtype=np.uint8)
    except (OSError, UnidentifiedImageError, ValueError) as exc:
        raise DatasetError(f"{path}: cannot decode mask PNG ({exc})") from exc
    return OcclusionMask.from_array(gray >= 128)

"""Normal-vector-correct dataset augmentation.

Flipping or rotating a normal map has to transform the stored vectors along
with the pixel grid: a horizontal flip negates the x component, an in-plane
rotation by theta rotates the (x, y) components by the same angle (expressed
in y-up normal space).  After any warp the background is restored to the
canonical direction, with the transformed foreground mask eroded slightly
first so resampling artefacts at the silhouette do not survive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List

import numpy as np
from scipy import ndimage

from .core import BACKGROUND, NormalMap, unit_normalize

_ROTZOOM_STREAM = 0xA46
_FLIP_ROTZOOM_STREAM = 0xA47


@dataclass(frozen=True)
class AugmentParams:
    rotation_limit: float = 20.0  # degrees
    zoom_limit: float = 0.10      # fraction
    erosion_radius: int = 1       # pixels
    rng_seed: int = 0

    def __post_init__(self):
        if self.rotation_limit < 0:
            raise ValueError("rotation_limit must be >= 0")
        if not 0.0 <= self.zoom_limit < 1.0:
            raise ValueError("zoom_limit must be in [0, 1)")
        if self.erosion_radius < 0:
            raise ValueError("erosion_radius must be >= 0")


def flip_normal_map(m: NormalMap) -> NormalMap:
    """Mirror horizontally, negating the x component of every vector."""
    vectors = m.vectors[:, ::-1].copy()
    vectors[..., 0] = -vectors[..., 0]
    fg = None
    if m.foreground is not None:
        fg = m.foreground[:, ::-1].copy()
        vectors[~fg] = BACKGROUND
    return NormalMap(vectors, fg)


def erode_mask(mask: np.ndarray, radius: int) -> np.ndarray:
    """Morphological erosion with a (2*radius+1)-square element.

    Pixels outside the grid count as False, so an all-true grid loses its
    border.  Radius 0 returns the input unchanged.
    """
    if radius < 0:
        raise ValueError("radius must be >= 0")
    mask = np.asarray(mask, dtype=bool)
    if radius == 0:
        return mask.copy()
    element = np.ones((2 * radius + 1, 2 * radius + 1), dtype=bool)
    return ndimage.binary_erosion(mask, structure=element, border_value=0)


def _bilinear_sample(field: np.ndarray, src_x: np.ndarray, src_y: np.ndarray):
    """Sample (H, W, C) float data at fractional coordinates.

    Returns the interpolated values and a boolean in-bounds grid; samples
    outside the source extent are left as zeros.
    """
    h, w = field.shape[:2]
    inside = (src_x >= 0.0) & (src_x <= w - 1.0) & (src_y >= 0.0) & (src_y <= h - 1.0)
    x = np.clip(src_x, 0.0, w - 1.0)
    y = np.clip(src_y, 0.0, h - 1.0)
    x0 = np.floor(x).astype(np.intp)
    y0 = np.floor(y).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (x - x0)[..., None]
    fy = (y - y0)[..., None]
    f = field.astype(np.float64, copy=False)
    top = f[y0, x0] * (1.0 - fx) + f[y0, x1] * fx
    bot = f[y1, x0] * (1.0 - fx) + f[y1, x1] * fx
    out = top * (1.0 - fy) + bot * fy
    out[~inside] = 0.0
    return out, inside


def rotate_zoom_normal_map(m: NormalMap, theta: float, scale: float,
                           erosion_radius: int = 1) -> NormalMap:
    """Rotate by ``theta`` degrees about the center and zoom by ``scale``.

    The grid is warped by inverse mapping with bilinear interpolation of the
    vector components; the sampled vectors get the matching in-plane
    rotation of their (x, y) components and are re-unit-normalized.  The
    foreground mask is warped with nearest-neighbor sampling, eroded by
    ``erosion_radius``, and everything outside it (including out-of-bounds
    samples) becomes the canonical background.

    Positive theta turns the image content counter-clockwise as displayed,
    and the vectors counter-clockwise in y-up normal space.
    """
    if scale <= 0:
        raise ValueError("scale must be positive")
    h, w = m.height, m.width
    cx = (w - 1) / 2.0
    cy = (h - 1) / 2.0
    rad = math.radians(theta)
    c, s = math.cos(rad), math.sin(rad)

    jj, ii = np.meshgrid(np.arange(w, dtype=np.float64),
                         np.arange(h, dtype=np.float64))
    ox = jj - cx
    oy = ii - cy
    # Inverse of the forward raster-space map [[c, s], [-s, c]] * scale.
    src_x = cx + (ox * c - oy * s) / scale
    src_y = cy + (ox * s + oy * c) / scale

    sampled, inside = _bilinear_sample(m.vectors, src_x, src_y)

    vx, vy, vz = sampled[..., 0], sampled[..., 1], sampled[..., 2]
    rotated = np.stack([c * vx - s * vy, s * vx + c * vy, vz], axis=-1)
    vectors = unit_normalize(rotated).astype(np.float32)

    fg_src = m.foreground_or_all()
    nx = np.clip(np.rint(src_x), 0, w - 1).astype(np.intp)
    ny = np.clip(np.rint(src_y), 0, h - 1).astype(np.intp)
    fg = fg_src[ny, nx] & inside
    fg = erode_mask(fg, erosion_radius)

    vectors[~fg] = BACKGROUND
    return NormalMap(vectors, fg)


def expand_dataset(images: List[NormalMap], params: AugmentParams) -> List[NormalMap]:
    """Expand N maps to 4N: originals, flips, and random rotate/zoom of each.

    Output order is all originals, all flips, per-image random rotate/zoom
    draws, then flips with independent draws.  Image k's draws come from RNG
    substreams keyed by (rng_seed, variant, k), so the expansion is
    deterministic and per-image parallelizable.
    """
    if not images:
        raise ValueError("input dataset is empty")
    out = list(images)
    out.extend(flip_normal_map(m) for m in images)
    for stream, flip_first in ((_ROTZOOM_STREAM, False), (_FLIP_ROTZOOM_STREAM, True)):
        for k, m in enumerate(images):
            rng = np.random.default_rng((params.rng_seed, stream, k))
            theta = rng.uniform(-params.rotation_limit, params.rotation_limit)
            scale = rng.uniform(1.0 - params.zoom_limit, 1.0 + params.zoom_limit)
            base = flip_normal_map(m) if flip_first else m
            out.append(rotate_zoom_normal_map(base, theta, scale,
                                              params.erosion_radius))
    return out

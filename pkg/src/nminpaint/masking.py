"""Occlusion-mask generation and masked generator inputs.

Masks store 1 at known pixels and 0 at occluded ones, so applying a mask is
an element-wise multiply that zeroes the occluded vectors while leaving the
rest untouched.  Three styles cover the usual occlusion shapes: random thick
line segments, one large blob, or many small scattered blobs.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .core import NormalMap, OcclusionMask

#: Every generated mask keeps its occluded fraction inside these bounds
#: (resampling internally until it does).
OCCLUDED_FRACTION_BOUNDS = (0.02, 0.40)

_MAX_REDRAWS = 100


class MaskStyle(enum.Enum):
    IRREGULAR_LINES = "lines"
    SINGLE_BIG_BLOB = "blob"
    SCATTERED_SMALL_BLOBS = "scatter"


@dataclass(frozen=True)
class MaskSpec:
    """Parameters for one mask style.

    ``count`` is the number of line segments or small blobs; leave it None
    to draw a per-mask count from the style's default range (lines 3..8,
    scattered blobs 5..15).  ``radius_range`` defaults to (2, 6) pixels for
    scattered blobs and (H/8, H/4) for the single big blob.
    """

    style: MaskStyle = MaskStyle.IRREGULAR_LINES
    count: Optional[int] = None
    max_thickness: int = 12
    radius_range: Optional[Tuple[float, float]] = None
    rng_seed: int = 0

    def __post_init__(self):
        if self.count is not None and self.count < 1:
            raise ValueError("count must be >= 1")
        if self.max_thickness < 1:
            raise ValueError("max_thickness must be >= 1")
        if self.radius_range is not None:
            lo, hi = self.radius_range
            if not (0 < lo <= hi):
                raise ValueError("radius_range must be positive and nonempty")


def _stamp_disc(occluded, cx, cy, radius):
    h, w = occluded.shape
    xs = np.arange(w, dtype=np.float64) - cx
    ys = np.arange(h, dtype=np.float64) - cy
    occluded |= (xs[None, :] ** 2 + ys[:, None] ** 2) <= radius * radius


def _stamp_segment(occluded, p1, p2, thickness):
    # Capsule fill: every pixel within thickness/2 of the segment.
    h, w = occluded.shape
    jj, ii = np.meshgrid(np.arange(w, dtype=np.float64),
                         np.arange(h, dtype=np.float64))
    dx, dy = p2[0] - p1[0], p2[1] - p1[1]
    length_sq = dx * dx + dy * dy
    if length_sq == 0.0:
        t = np.zeros_like(jj)
    else:
        t = np.clip(((jj - p1[0]) * dx + (ii - p1[1]) * dy) / length_sq, 0.0, 1.0)
    px = p1[0] + t * dx
    py = p1[1] + t * dy
    occluded |= (jj - px) ** 2 + (ii - py) ** 2 <= (thickness / 2.0) ** 2


def _draw_lines(rng, spec, width, height):
    occluded = np.zeros((height, width), dtype=bool)
    n = spec.count if spec.count is not None else int(rng.integers(3, 9))
    side = min(width, height)
    min_len = 0.25 * side
    # Thickness scales with the raster so coverage stays comparable across
    # sizes; max_thickness is always an upper cap.
    cap = min(float(spec.max_thickness), max(3.0, side / 10.0))
    for _ in range(n):
        for _ in range(50):
            x1, x2 = rng.uniform(0, width - 1, size=2)
            y1, y2 = rng.uniform(0, height - 1, size=2)
            if (x2 - x1) ** 2 + (y2 - y1) ** 2 >= min_len ** 2:
                break
        thickness = rng.uniform(2.0, cap)
        _stamp_segment(occluded, (x1, y1), (x2, y2), thickness)
    return occluded


def _draw_scatter(rng, spec, width, height):
    occluded = np.zeros((height, width), dtype=bool)
    n = spec.count if spec.count is not None else int(rng.integers(5, 16))
    side = min(width, height)
    lo, hi = spec.radius_range if spec.radius_range is not None \
        else (side / 32.0, 3.0 * side / 32.0)
    for _ in range(n):
        cx = rng.uniform(0, width - 1)
        cy = rng.uniform(0, height - 1)
        _stamp_disc(occluded, cx, cy, rng.uniform(lo, hi))
    return occluded


def _draw_blob(rng, spec, width, height):
    occluded = np.zeros((height, width), dtype=bool)
    lo, hi = spec.radius_range if spec.radius_range is not None \
        else (height / 8.0, height / 4.0)
    r = rng.uniform(lo, hi)
    if 2 * r > min(width, height) - 1:
        raise ValueError(f"blob radius {r:.1f} cannot fit inside {width}x{height}")
    cx = rng.uniform(r, width - 1 - r)
    cy = rng.uniform(r, height - 1 - r)
    _stamp_disc(occluded, cx, cy, r)
    return occluded


_DRAWERS = {
    MaskStyle.IRREGULAR_LINES: _draw_lines,
    MaskStyle.SINGLE_BIG_BLOB: _draw_blob,
    MaskStyle.SCATTERED_SMALL_BLOBS: _draw_scatter,
}


def generate_mask(spec: MaskSpec, width: int, height: int) -> OcclusionMask:
    """Generate a binary occlusion mask (1 = known, 0 = occluded).

    Deterministic given ``spec.rng_seed``.  Draws are resampled from the
    same stream until the occluded fraction lands inside
    ``OCCLUDED_FRACTION_BOUNDS``, so degenerate masks never escape.
    """
    if width < 8 or height < 8:
        raise ValueError(f"mask dimensions must be >= 8, got {width}x{height}")
    rng = np.random.default_rng(spec.rng_seed)
    draw = _DRAWERS[spec.style]
    lo, hi = OCCLUDED_FRACTION_BOUNDS
    for _ in range(_MAX_REDRAWS):
        occluded = draw(rng, spec, width, height)
        frac = occluded.mean()
        if lo <= frac <= hi:
            return OcclusionMask.from_array(~occluded)
    raise RuntimeError(
        f"could not draw a {spec.style.value} mask with occluded fraction in "
        f"[{lo}, {hi}] after {_MAX_REDRAWS} tries; check the mask parameters")


def apply_mask(m: NormalMap, mask: OcclusionMask) -> np.ndarray:
    """Zero out occluded pixels: per-channel product with the binary mask."""
    if (mask.height, mask.width) != (m.height, m.width):
        raise ValueError(f"mask {mask.height}x{mask.width} does not match "
                         f"map {m.height}x{m.width}")
    return (m.vectors * mask.values[..., None]).astype(np.float32)


def concat_mask_channel(masked: np.ndarray, mask: OcclusionMask) -> np.ndarray:
    """Stack the mask as a fourth channel onto the masked vector field."""
    if masked.shape[:2] != (mask.height, mask.width):
        raise ValueError(f"mask {mask.height}x{mask.width} does not match "
                         f"tensor {masked.shape[:2]}")
    channel = mask.values.astype(np.float32)[..., None]
    return np.concatenate([masked.astype(np.float32), channel], axis=-1)

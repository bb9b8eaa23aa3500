"""Core data types and arithmetic for normal-map images.

A normal map stores one unit direction vector per pixel, with components in
[-1, 1].  On disk the vectors live in 8-bit RGB via the affine codec
``c = round((v + 1) * 127.5)``; in memory everything is floating point.
Pixels outside the foreground hold the canonical background direction
``(-1, -1, -1) / sqrt(3)`` (the decoded value of RGB black).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

#: Canonical background direction, the decoded value of RGB (0, 0, 0).
BACKGROUND = (np.array([-1.0, -1.0, -1.0]) / np.sqrt(3.0)).astype(np.float32)

#: Foreground vectors must be unit length within this tolerance.
UNIT_TOLERANCE = 1e-4

#: Background vectors must match ``BACKGROUND`` componentwise within this.
BACKGROUND_TOLERANCE = 1e-6

DEFAULT_EPSILON = 1e-8


class InvalidNormalMap(ValueError):
    """Raised when grid data violates the normal-map invariants."""


def unit_normalize(v, epsilon: float = DEFAULT_EPSILON):
    """Scale vectors on the last axis to (almost) unit length.

    Computes ``v / (||v|| + epsilon)``.  The epsilon keeps the zero vector
    at zero instead of dividing by zero; for any vector with norm much
    larger than epsilon the result is unit length within epsilon.
    """
    v = np.asarray(v, dtype=np.float64)
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    return v / (norm + epsilon)


def rgb_to_normal(rgb):
    """Decode 8-bit RGB samples into unit normal vectors.

    Each channel maps affinely via ``c / 127.5 - 1`` and the resulting
    vector is unit-normalized, so RGB black decodes to the background
    direction ``(-1, -1, -1) / sqrt(3)``.  Accepts any ``(..., 3)`` array.
    """
    rgb = np.asarray(rgb, dtype=np.float64)
    return unit_normalize(rgb / 127.5 - 1.0)


def normal_to_rgb(v):
    """Encode vectors (unit length, or zero for masked pixels) as 8-bit RGB.

    Uses ``round((v + 1) * 127.5)`` with round-half-away-from-zero, clamped
    to [0, 255].  The zero vector encodes to the midpoint (128, 128, 128).
    """
    v = np.asarray(v, dtype=np.float64)
    scaled = (v + 1.0) * 127.5
    rounded = np.floor(np.abs(scaled) + 0.5) * np.sign(scaled)
    return np.clip(rounded, 0.0, 255.0).astype(np.uint8)


def angular_error(a, b) -> np.ndarray:
    """Angle between unit vectors in degrees, broadcasting over leading axes."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    dot = np.clip(np.sum(a * b, axis=-1), -1.0, 1.0)
    return np.degrees(np.arccos(dot))


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class NormalMap:
    """An H x W grid of unit normal vectors plus an optional foreground mask.

    ``vectors`` is float32 with shape (H, W, 3).  ``foreground`` is a boolean
    (H, W) grid where True marks face/object pixels; False pixels hold the
    exact ``BACKGROUND`` direction.  A missing mask means "all foreground".
    Instances are immutable; construction validates the invariants.
    """

    vectors: np.ndarray
    foreground: Optional[np.ndarray] = None

    def __post_init__(self):
        v = self.vectors
        if v.ndim != 3 or v.shape[2] != 3:
            raise InvalidNormalMap(f"vectors must be (H, W, 3), got {v.shape}")
        if v.shape[0] < 1 or v.shape[1] < 1:
            raise InvalidNormalMap(f"empty grid {v.shape[:2]}")
        fg = self.foreground
        if fg is not None:
            if fg.shape != v.shape[:2]:
                raise InvalidNormalMap(
                    f"foreground shape {fg.shape} != grid {v.shape[:2]}")
            if fg.dtype != np.bool_:
                raise InvalidNormalMap("foreground must be boolean")
            bg = v[~fg]
            if bg.size and np.max(np.abs(bg - BACKGROUND)) > BACKGROUND_TOLERANCE:
                raise InvalidNormalMap("background pixels deviate from the "
                                       "canonical background direction")
            fore = v[fg]
        else:
            fore = v.reshape(-1, 3)
        if fore.size:
            norms = np.linalg.norm(fore.astype(np.float64), axis=-1)
            worst = np.max(np.abs(norms - 1.0))
            if worst > UNIT_TOLERANCE:
                raise InvalidNormalMap(
                    f"foreground vector norm off unit by {worst:.2e}")
        _readonly(self.vectors)
        if fg is not None:
            _readonly(fg)

    @property
    def height(self) -> int:
        return self.vectors.shape[0]

    @property
    def width(self) -> int:
        return self.vectors.shape[1]

    def foreground_or_all(self) -> np.ndarray:
        """Foreground mask, defaulting to all-True when absent."""
        if self.foreground is not None:
            return self.foreground
        return np.ones(self.vectors.shape[:2], dtype=bool)

    @classmethod
    def from_vectors(cls, vectors, foreground=None) -> "NormalMap":
        """Build a map from raw vector data, conditioning it first.

        Copies to float32, renormalizes foreground vectors that drifted off
        the unit sphere by more than the tolerance (already-valid data is
        left bit-for-bit untouched), and forces background pixels to the
        exact ``BACKGROUND`` value.
        """
        v = np.array(vectors, dtype=np.float32, copy=True)
        if v.ndim != 3 or v.shape[2] != 3:
            raise InvalidNormalMap(f"vectors must be (H, W, 3), got {v.shape}")
        fg = None
        if foreground is not None:
            fg = np.array(foreground, dtype=bool, copy=True)
        norms = np.linalg.norm(v.astype(np.float64), axis=-1)
        off = np.abs(norms - 1.0) > UNIT_TOLERANCE
        if fg is not None:
            off &= fg
        if np.any(off):
            v[off] = unit_normalize(v[off]).astype(np.float32)
        if fg is not None:
            v[~fg] = BACKGROUND
        return cls(v, fg)


@dataclass(frozen=True)
class OcclusionMask:
    """Binary H x W occlusion grid: 1 = known pixel, 0 = occluded pixel."""

    values: np.ndarray

    def __post_init__(self):
        m = self.values
        if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
            raise ValueError(f"mask must be a non-empty 2-d grid, got {m.shape}")
        if m.dtype != np.uint8:
            raise ValueError("mask values must be uint8")
        if not np.all((m == 0) | (m == 1)):
            raise ValueError("mask values must be exactly 0 or 1")
        _readonly(m)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def occluded_fraction(self) -> float:
        return float(np.mean(self.values == 0))

    @classmethod
    def from_array(cls, values) -> "OcclusionMask":
        a = np.asarray(values)
        if a.dtype == np.bool_:
            a = a.astype(np.uint8)
        else:
            a = np.array(a, dtype=np.uint8, copy=True)
        return cls(a)


@dataclass(frozen=True)
class Rgb8Image:
    """An 8-bit RGB raster, the on-disk representation of a normal map."""

    samples: np.ndarray

    def __post_init__(self):
        s = self.samples
        if s.ndim != 3 or s.shape[2] != 3:
            raise ValueError(f"samples must be (H, W, 3), got {s.shape}")
        if s.dtype != np.uint8:
            raise ValueError("samples must be uint8")
        _readonly(s)

    @property
    def height(self) -> int:
        return self.samples.shape[0]

    @property
    def width(self) -> int:
        return self.samples.shape[1]

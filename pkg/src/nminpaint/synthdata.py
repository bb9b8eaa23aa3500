"""Analytic normal-map scenes: spheres and clipped spherical caps.

These serve as desk-scale training data and as the geometric oracle for the
augmentation tests (a centered sphere's normal map is invariant under
in-plane rotation, and zooming it is equivalent to rescaling the radius).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import List, Tuple

import numpy as np

from .core import BACKGROUND, NormalMap


class PrimitiveKind(enum.Enum):
    SPHERE = "sphere"
    CAP = "cap"


@dataclass(frozen=True)
class Primitive:
    center: Tuple[float, float]  # (x, y) pixel coordinates
    radius: float
    kind: PrimitiveKind = PrimitiveKind.SPHERE


@dataclass(frozen=True)
class SceneSpec:
    """Template for generated scenes.

    ``center_jitter`` (pixels) and ``radius_jitter`` (fraction) control how
    much each generated map perturbs the template primitives; with both at
    zero every map renders the template exactly.
    """

    width: int
    height: int
    primitives: List[Primitive] = field(default_factory=list)
    rng_seed: int = 0
    center_jitter: float = 0.0
    radius_jitter: float = 0.0

    def __post_init__(self):
        if not self.primitives:
            raise ValueError("a scene needs at least one primitive")
        if any(p.radius <= 0 for p in self.primitives):
            raise ValueError("primitive radii must be positive")


def sphere_normals_patch(width, height, center, radius):
    """Raw sphere-normal field and its disc mask, without background fill.

    For pixels with offset d = ((px - cx)/r, (py - cy)/r) inside the unit
    disc the normal is (d_x, -d_y, sqrt(1 - d_x^2 - d_y^2)); the y component
    is negated so that "up" in image space maps to +y in normal space.
    """
    cx, cy = center
    xs = np.arange(width, dtype=np.float64)
    ys = np.arange(height, dtype=np.float64)
    dx = (xs[None, :] - cx) / radius
    dy = (ys[:, None] - cy) / radius
    dx = np.broadcast_to(dx, (height, width))
    dy = np.broadcast_to(dy, (height, width))
    rr = dx * dx + dy * dy
    inside = rr <= 1.0
    z = np.sqrt(np.clip(1.0 - rr, 0.0, None))
    normals = np.stack([dx, -dy, z], axis=-1)
    return normals, inside


def render_sphere_normals(width: int, height: int, center, radius: float) -> NormalMap:
    """Render a single sphere over the canonical background."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    normals, inside = sphere_normals_patch(width, height, center, radius)
    vectors = np.broadcast_to(BACKGROUND, (height, width, 3)).astype(np.float32).copy()
    vectors[inside] = normals[inside].astype(np.float32)
    return NormalMap(vectors, inside)


def render_scene(spec: SceneSpec) -> NormalMap:
    """Render a composite scene.

    Primitives paint in list order.  A SPHERE overwrites anything beneath
    it; a CAP is clipped by everything drawn earlier, leaving a partial
    spherical patch.
    """
    h, w = spec.height, spec.width
    vectors = np.broadcast_to(BACKGROUND, (h, w, 3)).astype(np.float32).copy()
    fg = np.zeros((h, w), dtype=bool)
    for prim in spec.primitives:
        normals, inside = sphere_normals_patch(w, h, prim.center, prim.radius)
        if prim.kind is PrimitiveKind.CAP:
            region = inside & ~fg
        else:
            region = inside
        vectors[region] = normals[region].astype(np.float32)
        fg |= region
    return NormalMap(vectors, fg)


def _jittered(spec: SceneSpec, rng: np.random.Generator) -> SceneSpec:
    prims = []
    for p in spec.primitives:
        cx = p.center[0] + rng.uniform(-spec.center_jitter, spec.center_jitter)
        cy = p.center[1] + rng.uniform(-spec.center_jitter, spec.center_jitter)
        r = p.radius * rng.uniform(1.0 - spec.radius_jitter, 1.0 + spec.radius_jitter)
        prims.append(Primitive((cx, cy), max(r, 2.0), p.kind))
    return replace(spec, primitives=prims)


def generate_dataset(n: int, spec: SceneSpec) -> List[NormalMap]:
    """Render ``n`` maps with primitive placements/radii jittered per map.

    Deterministic in ``spec.rng_seed``: map k draws its jitter from an RNG
    substream keyed by (seed, k).  With zero jitter every map equals
    ``render_scene(spec)``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    maps = []
    for k in range(n):
        rng = np.random.default_rng((spec.rng_seed, 0x5CE2E, k))
        maps.append(render_scene(_jittered(spec, rng)))
    return maps


def default_scene_spec(size: int, rng_seed: int = 0) -> SceneSpec:
    """A centered sphere plus two clipped caps, with placement jitter."""
    c = (size - 1) / 2.0
    main = Primitive((c, c), 0.32 * size, PrimitiveKind.SPHERE)
    cap_a = Primitive((0.3 * size, 0.3 * size), 0.16 * size, PrimitiveKind.CAP)
    cap_b = Primitive((0.7 * size, 0.65 * size), 0.13 * size, PrimitiveKind.CAP)
    return SceneSpec(
        width=size,
        height=size,
        primitives=[main, cap_a, cap_b],
        rng_seed=rng_seed,
        center_jitter=0.08 * size,
        radius_jitter=0.25,
    )

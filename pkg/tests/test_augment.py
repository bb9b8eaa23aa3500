import numpy as np
import pytest

from nminpaint.augment import (AugmentParams, erode_mask, expand_dataset,
                               flip_normal_map, rotate_zoom_normal_map)
from nminpaint.core import BACKGROUND, NormalMap, angular_error
from nminpaint.synthdata import render_sphere_normals


def interior_disc(size, center, radius, margin=2.0):
    """Pixels at least ``margin`` inside the silhouette of a centered disc."""
    xs, ys = np.meshgrid(np.arange(size), np.arange(size))
    return (xs - center) ** 2 + (ys - center) ** 2 <= (radius - margin) ** 2


def sphere_invariance_error(theta, scale, size=128, erosion=1):
    """Mean interior angular error of a warped centered sphere against the
    analytically regenerated sphere of the zoomed radius."""
    radius = 0.42 * size
    c = (size - 1) / 2.0
    m = render_sphere_normals(size, size, (c, c), radius)
    warped = rotate_zoom_normal_map(m, theta, scale, erosion_radius=erosion)
    oracle = render_sphere_normals(size, size, (c, c), radius * scale)
    region = interior_disc(size, c, radius * scale) & warped.foreground
    assert region.sum() > 100
    return float(np.mean(angular_error(oracle.vectors[region],
                                       warped.vectors[region])))


class TestFlip:
    def test_vector_x_negated_and_mirrored(self):
        v = np.zeros((3, 5, 3), dtype=np.float32)
        v[..., 2] = 1.0
        v[1, 1] = [0.6, 0.0, 0.8]
        m = NormalMap(v)
        flipped = flip_normal_map(m)
        assert np.allclose(flipped.vectors[1, 5 - 1 - 1], [-0.6, 0.0, 0.8])

    def test_centered_sphere_is_mirror_symmetric(self, sphere_map):
        flipped = flip_normal_map(sphere_map)
        assert np.max(np.abs(flipped.vectors.astype(np.float64)
                             - sphere_map.vectors)) < 1e-6

    def test_involution_bit_exact(self, sphere_map):
        twice = flip_normal_map(flip_normal_map(sphere_map))
        assert np.array_equal(twice.vectors, sphere_map.vectors)
        assert np.array_equal(twice.foreground, sphere_map.foreground)

    def test_background_stays_canonical(self, sphere_map):
        flipped = flip_normal_map(sphere_map)
        assert np.all(flipped.vectors[~flipped.foreground] == BACKGROUND)


class TestRotateZoom:
    def test_identity_transform(self, sphere_map):
        out = rotate_zoom_normal_map(sphere_map, 0.0, 1.0, erosion_radius=0)
        assert np.max(np.abs(out.vectors.astype(np.float64)
                             - sphere_map.vectors)) <= 1e-6
        assert np.array_equal(out.foreground, sphere_map.foreground)

    def test_identity_on_interior_with_default_erosion(self, sphere_map):
        out = rotate_zoom_normal_map(sphere_map, 0.0, 1.0)
        region = interior_disc(65, 32, 20)
        assert np.max(np.abs(out.vectors[region].astype(np.float64)
                             - sphere_map.vectors[region])) <= 1e-6

    def test_sphere_rotation_invariance(self):
        assert sphere_invariance_error(20.0, 1.0) < 2.0

    def test_sphere_rotation_negative_angle(self):
        assert sphere_invariance_error(-17.5, 1.0) < 2.0

    def test_sphere_zoom_matches_rescaled_radius(self):
        assert sphere_invariance_error(0.0, 1.1) < 2.0
        assert sphere_invariance_error(12.0, 0.9) < 2.0

    def test_background_exact_after_warp(self, sphere_map):
        out = rotate_zoom_normal_map(sphere_map, 13.0, 1.05)
        assert np.all(out.vectors[~out.foreground] == BACKGROUND)
        # every pixel is either foreground or the exact background value
        bg_set = np.unique(out.vectors[~out.foreground], axis=0)
        assert bg_set.shape[0] == 1

    def test_foreground_unit_norm(self, sphere_map):
        out = rotate_zoom_normal_map(sphere_map, 19.0, 0.92)
        norms = np.linalg.norm(out.vectors[out.foreground].astype(np.float64),
                               axis=-1)
        assert np.max(np.abs(norms - 1.0)) < 1e-4

    def test_rejects_nonpositive_scale(self, sphere_map):
        with pytest.raises(ValueError):
            rotate_zoom_normal_map(sphere_map, 0.0, 0.0)


class TestErodeMask:
    def test_single_pixel_vanishes(self):
        mask = np.zeros((7, 7), dtype=bool)
        mask[3, 3] = True
        assert not erode_mask(mask, 1).any()

    def test_all_true_loses_border(self):
        out = erode_mask(np.ones((6, 8), dtype=bool), 1)
        assert out[1:-1, 1:-1].all()
        assert not out[0].any() and not out[-1].any()
        assert not out[:, 0].any() and not out[:, -1].any()

    def test_radius_zero_identity(self, rng):
        mask = rng.random((9, 9)) > 0.5
        assert np.array_equal(erode_mask(mask, 0), mask)

    def test_rejects_negative_radius(self):
        with pytest.raises(ValueError):
            erode_mask(np.ones((4, 4), dtype=bool), -1)


class TestExpandDataset:
    def test_four_n_rule(self, sphere_map):
        maps = [sphere_map] * 5
        out = expand_dataset(maps, AugmentParams(rng_seed=3))
        assert len(out) == 20

    def test_layout_originals_then_flips(self, sphere_map):
        small = render_sphere_normals(32, 32, (13, 17), 9)
        out = expand_dataset([sphere_map, small], AugmentParams(rng_seed=3))
        assert out[0] is sphere_map
        assert np.array_equal(out[3].vectors,
                              flip_normal_map(small).vectors)

    def test_deterministic(self, sphere_map):
        params = AugmentParams(rng_seed=99)
        a = expand_dataset([sphere_map], params)
        b = expand_dataset([sphere_map], params)
        for ma, mb in zip(a, b):
            assert np.array_equal(ma.vectors, mb.vectors)

    def test_distinct_draws_per_variant(self, sphere_map):
        out = expand_dataset([sphere_map], AugmentParams(rng_seed=4))
        assert not np.array_equal(out[2].vectors, out[3].vectors)

    def test_outputs_keep_unit_invariant(self, sphere_map):
        for m in expand_dataset([sphere_map], AugmentParams(rng_seed=12)):
            fg = m.foreground_or_all()
            norms = np.linalg.norm(m.vectors[fg].astype(np.float64), axis=-1)
            assert np.max(np.abs(norms - 1.0)) < 1e-4

    def test_rejects_empty_input(self):
        with pytest.raises(ValueError):
            expand_dataset([], AugmentParams())

    def test_rejects_bad_params(self):
        with pytest.raises(ValueError):
            AugmentParams(zoom_limit=1.5)
        with pytest.raises(ValueError):
            AugmentParams(rotation_limit=-1)

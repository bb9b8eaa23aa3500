import numpy as np
import pytest

from nminpaint.metrics import (PSNR_CAP, SSIM_K1, SSIM_K2, SSIM_SIGMA,
                               SSIM_WINDOW, discriminator_accuracy,
                               gaussian_window, masked_mean_angular_error,
                               psnr, ssim, to_unit_interval)


def brute_force_ssim(a, b):
    """Naive sliding-window oracle: explicit loops over window positions."""
    window = gaussian_window(SSIM_WINDOW, SSIM_SIGMA)
    c1 = SSIM_K1 ** 2
    c2 = SSIM_K2 ** 2
    if a.ndim == 2:
        a = a[..., None]
        b = b[..., None]
    values = []
    half = SSIM_WINDOW
    for ch in range(a.shape[2]):
        for i in range(a.shape[0] - half + 1):
            for j in range(a.shape[1] - half + 1):
                pa = a[i:i + half, j:j + half, ch]
                pb = b[i:i + half, j:j + half, ch]
                mu1 = float(np.sum(window * pa))
                mu2 = float(np.sum(window * pb))
                s11 = float(np.sum(window * pa * pa)) - mu1 * mu1
                s22 = float(np.sum(window * pb * pb)) - mu2 * mu2
                s12 = float(np.sum(window * pa * pb)) - mu1 * mu2
                num = (2 * mu1 * mu2 + c1) * (2 * s12 + c2)
                den = (mu1 * mu1 + mu2 * mu2 + c1) * (s11 + s22 + c2)
                values.append(num / den)
    return float(np.mean(values))


class TestSsim:
    def test_self_similarity_is_exactly_one(self, rng):
        a = rng.random((16, 16, 3))
        assert ssim(a, a) == 1.0

    def test_constant_patches_closed_form(self):
        a = np.zeros((16, 16))
        b = np.ones((16, 16))
        c1 = SSIM_K1 ** 2
        # mu terms: (2*0*1 + C1) / (0 + 1 + C1); sigma terms cancel to 1
        expected = c1 / (1.0 + c1)
        assert ssim(a, b) == pytest.approx(expected, rel=1e-12)

    def test_matches_brute_force_oracle(self, rng):
        for _ in range(3):
            a = rng.random((16, 16, 3))
            b = rng.random((16, 16, 3))
            assert ssim(a, b) == pytest.approx(brute_force_ssim(a, b), abs=1e-6)

    def test_symmetric(self, rng):
        a = rng.random((16, 16))
        b = rng.random((16, 16))
        assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)

    def test_invariant_under_whole_image_flip(self, rng):
        a = rng.random((20, 20, 3))
        b = rng.random((20, 20, 3))
        assert ssim(a[:, ::-1], b[:, ::-1]) == pytest.approx(ssim(a, b), abs=1e-12)

    def test_rejects_small_images(self, rng):
        with pytest.raises(ValueError):
            ssim(rng.random((8, 8)), rng.random((8, 8)))

    def test_rejects_shape_mismatch(self, rng):
        with pytest.raises(ValueError):
            ssim(rng.random((16, 16)), rng.random((16, 18)))


class TestPsnr:
    def test_identical_images_hit_cap(self, rng):
        a = rng.random((8, 8, 3))
        assert psnr(a, a) == PSNR_CAP

    def test_point_zero_one_mse_is_twenty_db(self):
        a = np.full((10, 10), 0.25)
        b = np.full((10, 10), 0.35)  # MSE = 0.01
        assert psnr(a, b) == pytest.approx(20.0, abs=1e-9)

    def test_unit_mse_is_zero_db(self):
        a = np.zeros((10, 10))
        b = np.ones((10, 10))
        assert psnr(a, b) == pytest.approx(0.0, abs=1e-12)

    def test_symmetric_and_permutation_invariant(self, rng):
        a = rng.random((12, 12))
        b = rng.random((12, 12))
        assert psnr(a, b) == psnr(b, a)
        perm = rng.permutation(144)
        assert psnr(a.ravel()[perm].reshape(12, 12),
                    b.ravel()[perm].reshape(12, 12)) == psnr(a, b)


class TestDiscriminatorAccuracy:
    def test_perfect_classification(self):
        assert discriminator_accuracy([0.9, 0.8], [0.1, 0.2]) == 1.0

    def test_ties_count_as_fake(self):
        # all probs 0.5: fakes are judged correctly, reals are not
        assert discriminator_accuracy([0.5, 0.5], [0.5, 0.5]) == 0.5

    def test_chance_level_near_half(self, rng):
        real = rng.random(1000)
        fake = rng.random(1000)
        assert abs(discriminator_accuracy(real, fake) - 0.5) < 0.1

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            discriminator_accuracy([], [])


class TestMaskedAngularError:
    def test_known_angle(self):
        target = np.zeros((4, 4, 3))
        target[..., 2] = 1.0
        pred = np.zeros((4, 4, 3))
        pred[..., 0] = 1.0
        occluded = np.zeros((4, 4), dtype=bool)
        occluded[0, 0] = True
        assert masked_mean_angular_error(target, pred, occluded) == \
            pytest.approx(90.0)

    def test_only_occluded_pixels_counted(self):
        target = np.zeros((2, 2, 3))
        target[..., 2] = 1.0
        pred = target.copy()
        pred[0, 0] = [1.0, 0.0, 0.0]  # error at a known pixel is ignored
        occluded = np.zeros((2, 2), dtype=bool)
        occluded[1, 1] = True
        assert masked_mean_angular_error(target, pred, occluded) == \
            pytest.approx(0.0, abs=1e-5)

    def test_no_occlusion_is_zero(self):
        target = np.zeros((2, 2, 3))
        assert masked_mean_angular_error(target, target,
                                         np.zeros((2, 2), dtype=bool)) == 0.0


class TestToUnitInterval:
    def test_affine_map(self):
        assert np.allclose(to_unit_interval([-1.0, 0.0, 1.0]), [0.0, 0.5, 1.0])

import math

import numpy as np
import pytest

from boxvote.core import BBox, GroundTruthBox
from boxvote.errors import ParseError
from boxvote.perturb import (
    PerturbKind,
    PerturbSpec,
    STANDARD_CONDITIONS,
    apply_perturbation,
    brightness,
    flip_box_h,
    flip_h,
    gaussian_blur,
    gaussian_kernel,
    linear_to_srgb,
    read_image,
    read_ppm,
    sharpen,
    srgb_to_linear,
    write_image,
    write_ppm,
)


def rand_image(rng, h=32, w=48):
    return rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8)


def gt(box, class_id=0):
    return GroundTruthBox(BBox(*box), class_id)


def srgb_decode_scalar(v8):
    """Independent scalar implementation of the sRGB transfer decode."""
    x = v8 / 255.0
    if x <= 0.04045:
        return x / 12.92
    return math.pow((x + 0.055) / 1.055, 2.4)


def srgb_encode_scalar(y):
    if y <= 0.0031308:
        x = y * 12.92
    else:
        x = 1.055 * math.pow(y, 1.0 / 2.4) - 0.055
    return int(min(max(round(x * 255.0), 0), 255))


class TestFlip:
    def test_box_mirror_arithmetic(self):
        assert flip_box_h(BBox(100, 100, 200, 200), 640) == BBox(440, 100, 540, 200)

    def test_centered_box_fixed_point(self):
        assert flip_box_h(BBox(315, 0, 325, 10), 640) == BBox(315, 0, 325, 10)

    def test_involution_bit_exact(self):
        rng = np.random.default_rng(0)
        img = rand_image(rng)
        gts = [gt((3, 5, 17, 21)), gt((10, 0, 48, 30), class_id=2)]
        once_img, once_gts = flip_h(img, gts)
        twice_img, twice_gts = flip_h(once_img, once_gts)
        assert np.array_equal(twice_img, img)
        assert twice_gts == gts

    def test_pixels_actually_mirrored(self):
        img = np.zeros((2, 3, 3), dtype=np.uint8)
        img[0, 0] = (255, 0, 0)
        flipped, _ = flip_h(img, [])
        assert tuple(flipped[0, 2]) == (255, 0, 0)
        assert tuple(flipped[0, 0]) == (0, 0, 0)

    def test_area_and_class_preserved(self):
        boxes = [gt((3, 5, 17, 21), class_id=1)]
        _, flipped = flip_h(np.zeros((30, 50, 3), dtype=np.uint8), boxes)
        assert flipped[0].box.area == boxes[0].box.area
        assert flipped[0].class_id == 1


class TestGaussianBlur:
    def test_kernel_radius_and_normalization(self):
        kernel = gaussian_kernel(2.0)
        assert len(kernel) == 2 * math.ceil(3 * 2.0) + 1  # radius 6 -> 13 taps
        assert kernel.sum() == pytest.approx(1.0, abs=1e-12)
        kernel_frac = gaussian_kernel(0.8)  # radius ceil(2.4) = 3 -> 7 taps
        assert len(kernel_frac) == 7

    def test_constant_image_unchanged(self):
        img = np.full((10, 10, 3), 77, dtype=np.uint8)
        blurred = gaussian_blur(img, 1.7)
        assert np.allclose(blurred, 77.0, atol=1e-9)

    def test_against_direct_2d_convolution(self):
        rng = np.random.default_rng(4)
        img = rand_image(rng, h=9, w=9)
        sigma = 1.0
        kernel = gaussian_kernel(sigma)
        radius = len(kernel) // 2
        # Direct 2D convolution with edge clamping, one pixel at a time.
        padded = np.pad(
            img.astype(float), ((radius, radius), (radius, radius), (0, 0)), mode="edge"
        )
        expected = np.zeros_like(img, dtype=float)
        for y in range(img.shape[0]):
            for x in range(img.shape[1]):
                for c in range(3):
                    acc = 0.0
                    for dy in range(-radius, radius + 1):
                        for dx in range(-radius, radius + 1):
                            weight = kernel[dy + radius] * kernel[dx + radius]
                            acc += weight * padded[y + dy + radius, x + dx + radius, c]
                    expected[y, x, c] = acc
        got = gaussian_blur(img, sigma)
        assert np.allclose(got, expected, atol=1e-9)


class TestSharpen:
    def test_amount_zero_identity(self):
        rng = np.random.default_rng(1)
        img = rand_image(rng)
        assert np.array_equal(sharpen(img, 2.0, 0.0), img)

    def test_constant_image_unchanged(self):
        img = np.full((8, 8, 3), 123, dtype=np.uint8)
        assert np.array_equal(sharpen(img, 3.0, 1.5), img)

    def test_bright_pixel_overshoots_and_clamps(self):
        img = np.zeros((7, 7, 3), dtype=np.uint8)
        img[3, 3] = 255
        out = sharpen(img, 1.0, 1.0)
        # Center: 255 + (255 - blur_center) > 255 -> clamped at 255.
        assert tuple(out[3, 3]) == (255, 255, 255)
        # Direct check of one neighbour value via the formula.
        kernel = gaussian_kernel(1.0)
        radius = len(kernel) // 2
        blur_neighbour = 255.0 * kernel[radius] * kernel[radius - 1]
        expected = np.clip(round(0.0 + 1.0 * (0.0 - blur_neighbour)), 0, 255)
        assert out[3, 4, 0] == expected  # negative ring clamps to 0

    def test_dimensions_unchanged(self):
        rng = np.random.default_rng(2)
        img = rand_image(rng, h=21, w=13)
        assert sharpen(img, 2.0, 1.0).shape == img.shape


class TestBrightness:
    def test_factor_one_round_trip_within_one(self):
        rng = np.random.default_rng(3)
        img = rand_image(rng)
        out = brightness(img, 1.0)
        assert np.max(np.abs(out.astype(int) - img.astype(int))) <= 1

    def test_black_stays_black(self):
        img = np.zeros((4, 4, 3), dtype=np.uint8)
        for factor in (0.3, 1.0, 2.5):
            assert np.array_equal(brightness(img, factor), img)

    def test_midgray_against_scalar_oracle(self):
        img = np.full((2, 2, 3), 127, dtype=np.uint8)
        out = brightness(img, 2.0)
        expected = srgb_encode_scalar(min(srgb_decode_scalar(127) * 2.0, 1.0))
        assert np.all(out == expected)

    def test_every_value_against_scalar_oracle(self):
        ramp = np.arange(256, dtype=np.uint8).reshape(16, 16, 1).repeat(3, axis=2)
        for factor in (0.7, 1.3):
            out = brightness(ramp, factor)
            for v in range(256):
                expected = srgb_encode_scalar(min(srgb_decode_scalar(v) * factor, 1.0))
                assert out[v // 16, v % 16, 0] == expected

    def test_transfer_functions_invert(self):
        values = np.linspace(0, 1, 1001)
        back = linear_to_srgb(srgb_to_linear(values))
        assert np.allclose(back, values, atol=1e-9)


class TestApplyAndSpecs:
    def test_spec_validation(self):
        with pytest.raises(ValueError):
            PerturbSpec(PerturbKind.SHARPEN, sigma=0.0)
        with pytest.raises(ValueError):
            PerturbSpec(PerturbKind.BRIGHTNESS, factor=0.0)

    def test_standard_conditions_present(self):
        assert set(STANDARD_CONDITIONS) == {"N", "F", "SUp", "BUp", "BDn"}
        assert STANDARD_CONDITIONS["N"] is None

    def test_apply_keeps_boxes_for_photometric_kinds(self):
        rng = np.random.default_rng(8)
        img = rand_image(rng)
        gts = [gt((1, 2, 11, 12))]
        for name in ("SUp", "BUp", "BDn"):
            _, out_gts = apply_perturbation(img, gts, STANDARD_CONDITIONS[name])
            assert out_gts == gts

    def test_deterministic(self):
        rng = np.random.default_rng(12)
        img = rand_image(rng)
        spec = PerturbSpec(PerturbKind.SHARPEN, sigma=1.3, amount=0.8)
        first, _ = apply_perturbation(img, [], spec)
        second, _ = apply_perturbation(img.copy(), [], spec)
        assert np.array_equal(first, second)


class TestImageIo:
    def test_ppm_round_trip(self, tmp_path):
        rng = np.random.default_rng(6)
        img = rand_image(rng, h=5, w=7)
        path = tmp_path / "img.ppm"
        write_ppm(path, img)
        assert np.array_equal(read_ppm(path), img)

    def test_ppm_rejects_garbage(self, tmp_path):
        path = tmp_path / "bad.ppm"
        path.write_bytes(b"P5\n1 1\n255\n\x00")
        with pytest.raises(ParseError):
            read_ppm(path)

    def test_ppm_truncated_raster(self, tmp_path):
        path = tmp_path / "short.ppm"
        path.write_bytes(b"P6\n2 2\n255\n\x00\x00\x00")
        with pytest.raises(ParseError):
            read_ppm(path)

    def test_png_round_trip(self, tmp_path):
        rng = np.random.default_rng(7)
        img = rand_image(rng, h=6, w=4)
        path = tmp_path / "img.png"
        write_image(path, img)
        assert np.array_equal(read_image(path), img)

"""Degradation operators: kernels, blur, sub-pixel warp, decimation, noise."""

import math

import numpy as np
import pytest

from mfsr.core import DegradationModel, image_from_array, materialize
from mfsr.degrade import (
    WarpSpec,
    blur,
    blur_adjoint,
    blur_operator,
    downsample,
    downsample_operator,
    gaussian_kernel,
    generate_observations,
    shift_operator,
    upsample_zero,
    warp_bilinear,
    warp_operator,
)
from mfsr.scenes import make_scene


def naive_convolve_replicate(img, kernel):
    """Independent double-loop true convolution with edge clamping."""
    h, w = img.shape
    kh, kw = kernel.shape
    ch, cw = kh // 2, kw // 2
    out = np.zeros_like(img)
    for m in range(h):
        for n in range(w):
            acc = 0.0
            for i in range(kh):
                for j in range(kw):
                    r = min(max(m - (i - ch), 0), h - 1)
                    c = min(max(n - (j - cw), 0), w - 1)
                    acc += kernel[i, j] * img[r, c]
            out[m, n] = acc
    return out


class TestGaussianKernel:
    def test_single_tap(self):
        assert np.array_equal(gaussian_kernel(1, 2.7), [[1.0]])

    def test_normalized_and_peaked(self):
        k = gaussian_kernel(9, 1.0)
        assert abs(k.sum() - 1.0) < 1e-12
        assert k[4, 4] == k.max()
        assert np.array_equal(k, k.T)
        assert np.array_equal(k, k[::-1, ::-1])

    def test_center_to_edge_ratio(self):
        # adjacent tap along an axis: exp(-0/2) / exp(-1/2) = exp(0.5)
        k = gaussian_kernel(3, 1.0)
        assert k[1, 1] / k[1, 2] == pytest.approx(math.exp(0.5), abs=1e-9)

    def test_validation(self):
        with pytest.raises(ValueError, match="odd"):
            gaussian_kernel(4, 1.0)
        with pytest.raises(ValueError, match="sigma"):
            gaussian_kernel(3, 0.0)


class TestBlur:
    def test_constant_preserved(self):
        img = image_from_array(np.full((8, 8), 42.0))
        out = blur(img, gaussian_kernel(5, 1.0))
        assert np.max(np.abs(out.data - 42.0)) < 1e-12

    def test_impulse_response_is_kernel(self):
        k = gaussian_kernel(3, 1.0)
        arr = np.zeros((9, 9))
        arr[4, 4] = 1.0
        out = blur(image_from_array(arr), k)
        assert np.max(np.abs(out.data[3:6, 3:6] - k)) < 1e-15

    def test_matches_double_loop_oracle(self):
        rng = np.random.default_rng(0)
        img = rng.normal(size=(16, 16)) * 50 + 100
        k = gaussian_kernel(5, 1.3)
        out = blur(image_from_array(img), k)
        assert np.max(np.abs(out.data - naive_convolve_replicate(img, k))) < 1e-12

    def test_kernel_larger_than_image(self):
        with pytest.raises(ValueError, match="larger"):
            blur(image_from_array(np.ones((3, 3))), gaussian_kernel(5, 1.0))

    def test_adjoint_exact(self):
        rng = np.random.default_rng(1)
        k = gaussian_kernel(5, 1.1)
        for boundary in ("replicate", "zero"):
            x = rng.normal(size=(10, 12))
            y = rng.normal(size=(10, 12))
            op = blur_operator(k, 10, 12, boundary)
            assert op(x.ravel()) @ y.ravel() == pytest.approx(
                x.ravel() @ op.adjoint(y.ravel()), rel=1e-12)
            assert np.allclose(blur_adjoint(y, k, boundary).ravel(),
                               op.adjoint(y.ravel()), atol=0)


class TestWarp:
    def test_zero_shift_identity(self):
        rng = np.random.default_rng(2)
        img = image_from_array(rng.normal(size=(7, 9)))
        out = warp_bilinear(img, WarpSpec(0.0, 0.0))
        assert np.array_equal(out.data, img.data)

    def test_integer_shift_translates_interior(self):
        rng = np.random.default_rng(3)
        arr = rng.normal(size=(8, 8))
        out = warp_bilinear(image_from_array(arr), WarpSpec(0.0, 2.0))
        # samples at (m+2, n): rows 0..5 of output come from rows 2..7
        assert np.array_equal(out.data[:6], arr[2:])

    def test_half_pixel_shift_on_ramp(self):
        # bilinear interpolation reproduces linear functions exactly
        ramp = np.tile(np.arange(12.0), (6, 1))
        out = warp_bilinear(image_from_array(ramp), WarpSpec(0.5, 0.0))
        assert np.max(np.abs(out.data[:, :-1] - (ramp[:, :-1] + 0.5))) < 1e-12

    def test_fractional_decomposition_exact(self):
        for s in (-2.75, -0.5, 0.0, 0.25, 3.5):
            spec = WarpSpec(s, s / 2)
            assert spec.wx + spec.vx == s
            assert 0.0 <= spec.vx < 1.0

    def test_operator_zero_fraction_is_integer_shift(self):
        rng = np.random.default_rng(4)
        v = rng.normal(size=42)
        w = warp_operator(WarpSpec(3.0, -1.0), 6, 7)
        t = shift_operator(-1, 3, 6, 7)
        assert np.array_equal(w(v), t(v))

    def test_interior_row_sums_one(self):
        w = materialize(warp_operator(WarpSpec(0.3, 0.6), 6, 6))
        sums = w.sum(axis=1)
        assert np.max(np.abs(sums - 1.0)) < 1e-12

    def test_operator_matches_functional_warp(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            arr = rng.normal(size=(9, 8)) * 30 + 90
            sx, sy = rng.uniform(-3, 3, size=2)
            op = warp_operator(WarpSpec(sx, sy), 9, 8)
            direct = warp_bilinear(image_from_array(arr), WarpSpec(sx, sy))
            assert np.max(np.abs(op(arr.ravel()) - direct.vector)) < 1e-12

    def test_materialized_operator_matches_functional(self):
        rng = np.random.default_rng(6)
        spec = WarpSpec(1.4, -0.8)
        m = materialize(warp_operator(spec, 6, 6))
        for _ in range(10):
            arr = rng.normal(size=(6, 6))
            direct = warp_bilinear(image_from_array(arr), spec)
            assert np.max(np.abs(m @ arr.ravel() - direct.vector)) < 1e-12


class TestDownsample:
    def test_scale_one_identity(self):
        rng = np.random.default_rng(7)
        img = image_from_array(rng.normal(size=(5, 5)))
        assert np.array_equal(downsample(img, 1).data, img.data)

    def test_picks_grid_rows(self):
        ramp = np.arange(36.0).reshape(6, 6)
        out = downsample(image_from_array(ramp), 3)
        assert np.array_equal(out.data, ramp[::3, ::3])

    def test_left_inverse_of_zero_insertion(self):
        rng = np.random.default_rng(8)
        small = rng.normal(size=(4, 5))
        up = upsample_zero(small, 3)
        down = downsample(image_from_array(up), 3)
        assert np.array_equal(down.data, small)

    def test_non_divisible_rejected(self):
        with pytest.raises(ValueError, match="divisible"):
            downsample(image_from_array(np.ones((7, 6))), 3)

    def test_blur_downsample_chain_matches_operators(self):
        rng = np.random.default_rng(9)
        k = gaussian_kernel(3, 1.0)
        arr = rng.normal(size=(12, 12)) * 20 + 100
        from mfsr.core import compose
        chain = compose([downsample_operator(3, 12, 12), blur_operator(k, 12, 12)])
        func = downsample(blur(image_from_array(arr), k), 3)
        assert np.max(np.abs(chain(arr.ravel()) - func.vector)) < 1e-12


class TestGenerateObservations:
    def kernel(self):
        return gaussian_kernel(9, 1.0)

    def test_degenerate_model_is_plain_downsample(self):
        rng = np.random.default_rng(10)
        hr = image_from_array(rng.uniform(0, 255, size=(12, 12)))
        model = DegradationModel(3, np.array([[1.0]]), 0.0, 0)
        frames = generate_observations(hr, model, 1, 0.0)
        assert len(frames) == 1
        lr, spec = frames[0]
        assert (spec.shift_x, spec.shift_y) == (0.0, 0.0)
        assert np.array_equal(lr.data, hr.data[::3, ::3])

    def test_same_seed_is_deterministic(self):
        hr = image_from_array(make_scene(60, 60, seed=1))
        model = DegradationModel(3, self.kernel(), np.sqrt(2), 42)
        a = generate_observations(hr, model, 5, 5.0)
        b = generate_observations(hr, model, 5, 5.0)
        for (fa, sa), (fb, sb) in zip(a, b):
            assert np.array_equal(fa.data, fb.data)
            assert (sa.shift_x, sa.shift_y) == (sb.shift_x, sb.shift_y)

    def test_target_frame_zero_shift_and_shift_range(self):
        hr = image_from_array(make_scene(60, 60, seed=2))
        model = DegradationModel(3, self.kernel(), 0.0, 7)
        frames = generate_observations(hr, model, 5, 5.0)
        assert frames[0][1].shift_x == 0.0 and frames[0][1].shift_y == 0.0
        for _, spec in frames[1:]:
            assert abs(spec.shift_x) <= 5.0 and abs(spec.shift_y) <= 5.0

    def test_constant_image_noise_free_stays_constant(self):
        hr = image_from_array(np.full((18, 18), 77.0))
        model = DegradationModel(3, self.kernel(), 0.0, 1)
        for lr, _ in generate_observations(hr, model, 3, 4.0):
            assert np.max(np.abs(lr.data - 77.0)) < 1e-10

    def test_snr_range_on_natural_image(self):
        # Gaussian noise sigma=sqrt(2) on a 256x256 natural image gives
        # frame SNRs of roughly 37-40 dB
        hr = image_from_array(make_scene(256, 256, seed=3))
        noisy_model = DegradationModel(3, self.kernel(), np.sqrt(2), 11)
        clean_model = DegradationModel(3, self.kernel(), 0.0, 11)
        noisy = generate_observations(hr, noisy_model, 5, 5.0)
        clean = generate_observations(hr, clean_model, 5, 5.0)
        for (fn, _), (fc, _) in zip(noisy, clean):
            noise = fn.data - fc.data
            snr = 10.0 * np.log10((fc.data ** 2).sum() / (noise ** 2).sum())
            assert 36.0 <= snr <= 41.0

    def test_too_small_for_scale(self):
        hr = image_from_array(np.ones((2, 2)))
        model = DegradationModel(3, np.array([[1.0]]), 0.0, 0)
        with pytest.raises(ValueError, match="too small"):
            generate_observations(hr, model, 1, 0.0)

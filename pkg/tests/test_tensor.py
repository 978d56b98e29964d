import numpy as np
import png
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from palign.errors import EmptyRegion, PngFormatError
from palign.tensor import (ImageRGB, Mask, compute_stats, load_png, save_gray_png, save_png,
                           save_png16, to_bytes)


def _write(path, rows, **kw):
    with open(path, "wb") as fh:
        png.Writer(**kw).write(fh, rows)


class TestImageRGB:
    def test_rejects_bad_shapes(self):
        with pytest.raises(ValueError):
            ImageRGB(np.zeros((2, 4, 4)))
        with pytest.raises(ValueError):
            ImageRGB(np.zeros((3, 0, 4)))

    def test_rejects_non_finite(self):
        a = np.zeros((3, 2, 2))
        a[0, 0, 0] = np.nan
        with pytest.raises(ValueError):
            ImageRGB(a)

    def test_is_immutable_and_detached_from_caller(self):
        a = np.full((3, 2, 2), 0.25)
        img = ImageRGB(a)
        a[:] = 0.0
        assert np.all(img.data == 0.25)
        with pytest.raises(ValueError):
            img.data[0, 0, 0] = 1.0

    def test_interleaved_input_and_clamp(self):
        hwc = np.zeros((2, 5, 3))
        hwc[..., 0] = 1.5
        img = ImageRGB.from_array(hwc, clamp=True)
        assert img.shape == (2, 5)
        assert img.data[0].max() == 1.0
        np.testing.assert_array_equal(img.interleaved()[..., 1], 0.0)

    def test_pixels_round_trip(self, rng):
        img = ImageRGB(rng.random((3, 4, 6)))
        back = ImageRGB.from_pixels(img.pixels(), 4, 6)
        np.testing.assert_array_equal(back.data, img.data)
        assert img.n_pixels == 24


class TestStats:
    def test_constant_image(self):
        s = compute_stats(ImageRGB.constant(0.5, 3, 3))
        np.testing.assert_allclose(s.mean, 0.5)
        np.testing.assert_array_equal(s.covariance, 0.0)
        assert s.count == 9

    def test_two_pixel_hand_computation(self):
        data = np.zeros((3, 1, 2))
        data[:, 0, 1] = 1.0
        s = compute_stats(ImageRGB(data))
        np.testing.assert_allclose(s.mean, 0.5)
        np.testing.assert_allclose(s.covariance, np.full((3, 3), 0.25))

    def test_self_cross_covariance(self, rng):
        a = ImageRGB(rng.random((3, 5, 5)))
        s = compute_stats(a, a)
        np.testing.assert_allclose(s.cross_covariance, s.covariance, atol=1e-15)

    def test_full_mask_equals_unmasked(self, rng):
        a, b = ImageRGB(rng.random((3, 6, 7))), ImageRGB(rng.random((3, 6, 7)))
        s0 = compute_stats(a, b)
        s1 = compute_stats(a, b, Mask.full(6, 7))
        np.testing.assert_array_equal(s0.covariance, s1.covariance)
        np.testing.assert_array_equal(s0.cross_covariance, s1.cross_covariance)

    def test_empty_mask(self, rng):
        with pytest.raises(EmptyRegion):
            compute_stats(ImageRGB(rng.random((3, 2, 2))), mask=Mask.full(2, 2, False))

    def test_mismatched_shapes(self, rng):
        with pytest.raises(ValueError):
            compute_stats(ImageRGB(rng.random((3, 2, 2))), ImageRGB(rng.random((3, 2, 3))))

    def test_stable_for_large_offset(self):
        # values near 1 with tiny spread: a naive one-pass E[x^2] - E[x]^2 loses digits
        rng = np.random.default_rng(3)
        x = 1.0 - 1e-6 * rng.random((3, 200, 500))
        s = compute_stats(ImageRGB(x))
        ref = np.cov(x.reshape(3, -1), bias=True)
        np.testing.assert_allclose(s.covariance, ref, rtol=1e-9, atol=0)

    @settings(max_examples=40, deadline=None)
    @given(arrays(np.float64, (3, 4, 5), elements=st.floats(0, 1)), st.randoms())
    def test_psd_symmetric_permutation_invariant(self, data, rnd):
        img = ImageRGB(data)
        s = compute_stats(img)
        assert np.max(np.abs(s.covariance - s.covariance.T)) <= 1e-12
        assert np.linalg.eigvalsh(s.covariance).min() >= -1e-10
        perm = list(range(20))
        rnd.shuffle(perm)
        shuffled = ImageRGB.from_pixels(img.pixels()[:, perm], 4, 5)
        s2 = compute_stats(shuffled)
        np.testing.assert_allclose(s2.mean, s.mean, atol=1e-15)
        np.testing.assert_allclose(s2.covariance, s.covariance, atol=1e-15)


class TestPng:
    def test_8bit_extremes(self, tmp_path):
        p = tmp_path / "a.png"
        _write(p, [[255, 0, 255, 0, 0, 0]], width=2, height=1, greyscale=False, bitdepth=8)
        img = load_png(p)
        assert img.data[0, 0, 0] == 1.0 and img.data[1, 0, 0] == 0.0

    def test_16bit_division(self, tmp_path):
        p = tmp_path / "a.png"
        _write(p, [[32768, 32768, 32768]], width=1, height=1, greyscale=False, bitdepth=16)
        assert load_png(p).data[0, 0, 0] == pytest.approx(32768 / 65535, abs=1e-15)

    def test_grey_and_alpha(self, tmp_path):
        g = tmp_path / "g.png"
        _write(g, [[51, 102]], width=2, height=1, greyscale=True, bitdepth=8)
        img = load_png(g)
        np.testing.assert_allclose(img.data[:, 0, 1], 0.4)
        a = tmp_path / "a.png"
        _write(a, [[255, 0, 0, 7]], width=1, height=1, greyscale=False, alpha=True, bitdepth=8)
        np.testing.assert_allclose(load_png(a).data[:, 0, 0], [1, 0, 0])

    def test_low_bit_depth_rejected(self, tmp_path):
        p = tmp_path / "b.png"
        _write(p, [[1, 0]], width=2, height=1, greyscale=True, bitdepth=1)
        with pytest.raises(PngFormatError, match="bit depth"):
            load_png(p)

    def test_garbage_and_missing(self, tmp_path):
        p = tmp_path / "bad.png"
        p.write_bytes(b"not a png at all")
        with pytest.raises(PngFormatError):
            load_png(p)
        with pytest.raises(FileNotFoundError):
            load_png(tmp_path / "none.png")

    def test_quantization(self):
        np.testing.assert_array_equal(to_bytes(np.array([1.0, 0.5, 0.0, -1, 2])),
                                      [255, 128, 0, 0, 255])

    def test_round_trip(self, tmp_path, rng):
        img = ImageRGB(rng.random((3, 7, 9)))
        save_png(img, tmp_path / "x.png")
        assert np.max(np.abs(load_png(tmp_path / "x.png").data - img.data)) <= 0.5 / 255 + 1e-12
        save_png16(img, tmp_path / "y.png")
        assert np.max(np.abs(load_png(tmp_path / "y.png").data - img.data)) <= 0.5 / 65535 + 1e-12

    def test_gray_writer(self, tmp_path):
        save_gray_png(np.array([[0.0, 1.0]]), tmp_path / "m.png")
        img = load_png(tmp_path / "m.png")
        np.testing.assert_array_equal(img.data[:, 0, :], [[0, 1]] * 3)


class TestMask:
    def test_checkerboard_and_invert(self):
        m = Mask.checkerboard(4, 4)
        assert m.count() == 8 and m.invert().count() == 8
        assert not (m.bits & m.invert().bits).any()

    def test_from_image(self):
        data = np.zeros((3, 2, 2))
        data[:, 0, :] = 1.0
        assert Mask.from_image(ImageRGB(data)).count() == 2

    def test_requires_2d(self):
        with pytest.raises(ValueError):
            Mask(np.zeros(4, dtype=bool))

"""Dark channel maps, the L2 map loss, and sparsity diagnostics."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dcdeblur.dark_channel import (
    dark_channel_loss,
    dark_channel_map,
    dark_channel_sparsity,
)
from dcdeblur.data.kernels import BlurKernel, apply_blur
from dcdeblur.engine import Tape, Tensor, gradcheck
from dcdeblur.errors import ConfigError, ShapeError

from oracles import dark_channel_direct


class TestDarkChannelMap:
    def test_constant_gray(self):
        img = Tensor(np.full((1, 3, 8, 8), 0.4))
        dc = dark_channel_map(img, 3)
        np.testing.assert_allclose(dc.values.data, 0.4)

    def test_window_covering_image_gives_global_min(self, rng):
        img = rng.uniform(0.1, 1.0, size=(1, 3, 7, 7))
        img[0, 2, 3, 4] = 0.03
        dc = dark_channel_map(Tensor(img), 15)
        np.testing.assert_allclose(dc.values.data, 0.03)

    def test_matches_bruteforce_oracle(self, rng):
        for window in (1, 3, 5):
            for _ in range(5):
                img = rng.uniform(size=(3, 16, 16))
                dc = dark_channel_map(Tensor(img[None]), window)
                expected = dark_channel_direct(img, window)
                np.testing.assert_array_equal(dc.values.data[0, 0], expected)

    def test_window_one_single_channel_is_identity(self, rng):
        img = rng.uniform(size=(1, 1, 6, 6))
        dc = dark_channel_map(Tensor(img), 1)
        np.testing.assert_array_equal(dc.values.data[0, 0], img[0, 0])

    def test_values_bounded_by_pixel_channel_min(self, rng):
        img = rng.uniform(size=(1, 3, 10, 10))
        dc = dark_channel_map(Tensor(img), 5)
        channel_min = img.min(axis=1)
        assert np.all(dc.values.data[:, 0] <= channel_min + 1e-15)

    def test_every_value_exists_in_window(self, rng):
        img = rng.uniform(size=(1, 3, 8, 8))
        dc = dark_channel_map(Tensor(img), 3)
        for y in range(8):
            for x in range(8):
                lo_y, hi_y = max(0, y - 1), min(8, y + 2)
                lo_x, hi_x = max(0, x - 1), min(8, x + 2)
                window_vals = img[0, :, lo_y:hi_y, lo_x:hi_x]
                assert dc.values.data[0, 0, y, x] in window_vals

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 10_000), window=st.sampled_from([1, 3, 5]))
    def test_monotone_in_image(self, seed, window):
        gen = np.random.default_rng(seed)
        low = gen.uniform(size=(1, 3, 8, 8))
        high = low + gen.uniform(0.0, 0.5, size=(1, 3, 8, 8))
        map_low = dark_channel_map(Tensor(low), window).values.data
        map_high = dark_channel_map(Tensor(high), window).values.data
        assert np.all(map_low <= map_high + 1e-15)

    def test_even_window_rejected(self, rng):
        with pytest.raises(ConfigError):
            dark_channel_map(Tensor(rng.uniform(size=(1, 3, 4, 4))), 4)

    def test_two_channel_rejected(self, rng):
        with pytest.raises(ShapeError):
            dark_channel_map(Tensor(rng.uniform(size=(1, 2, 4, 4))), 3)


class TestBlurLowerBound:
    def test_blurred_map_dominates_dilated_window_map(self, rng):
        """dark(S*k, w) >= dark(S, w + 2r) at interior pixels, box kernel r=1."""
        box = BlurKernel(np.full((3, 3), 1.0 / 9.0), (1, 1))
        w, r = 3, 1
        margin = w // 2 + r
        for _ in range(10):
            img = rng.uniform(size=(3, 16, 16))
            blurred = apply_blur(Tensor(img), box)
            map_blurred = dark_channel_map(Tensor(blurred.data[None]), w).values.data[0, 0]
            map_dilated = dark_channel_map(Tensor(img[None]), w + 2 * r).values.data[0, 0]
            interior = (slice(margin, 16 - margin),) * 2
            assert np.all(map_blurred[interior] >= map_dilated[interior] - 1e-12)


class TestDarkChannelLoss:
    def test_identical_images_zero(self, rng):
        img = Tensor(rng.uniform(size=(1, 3, 8, 8)))
        assert dark_channel_loss(img, Tensor(img.data.copy()), 3).item() == 0.0

    def test_zeros_vs_ones(self):
        zeros = Tensor(np.zeros((1, 3, 6, 6)))
        ones = Tensor(np.ones((1, 3, 6, 6)))
        assert dark_channel_loss(zeros, ones, 3).item() == pytest.approx(1.0)

    def test_loss_nonnegative_zero_iff_maps_equal(self, rng):
        a = Tensor(rng.uniform(size=(1, 3, 8, 8)))
        b = Tensor(rng.uniform(size=(1, 3, 8, 8)))
        loss = dark_channel_loss(a, b, 3).item()
        assert loss > 0.0

    def test_gradient_flows_to_restored_only(self, rng):
        restored = Tensor(rng.uniform(size=(1, 3, 6, 6)), requires_grad=True)
        sharp = Tensor(rng.uniform(size=(1, 3, 6, 6)), requires_grad=True)
        with Tape() as tape:
            loss = dark_channel_loss(restored, sharp, 3)
        tape.backward(loss)
        assert restored.grad is not None and np.any(restored.grad)
        assert sharp.grad is None

    def test_gradcheck_off_ties(self, rng):
        values = np.linspace(0.02, 0.98, 3 * 8 * 8)
        restored = Tensor(rng.permutation(values).reshape(1, 3, 8, 8), requires_grad=True)
        sharp = Tensor(rng.uniform(size=(1, 3, 8, 8)))
        err = gradcheck(lambda r: dark_channel_loss(r, sharp, 3), [restored], 1e-5)
        assert err < 1e-3

    def test_network_range_remap(self):
        """Inputs declared in [-1,1] are scored as intensities in [0,1]."""
        neg_ones = Tensor(np.full((1, 3, 6, 6), -1.0))
        ones = Tensor(np.ones((1, 3, 6, 6)))
        loss = dark_channel_loss(neg_ones, ones, 3, input_range=(-1.0, 1.0))
        assert loss.item() == pytest.approx(1.0)


class TestSparsity:
    def test_all_black_zero(self):
        img = Tensor(np.zeros((1, 3, 16, 16)))
        assert dark_channel_sparsity(img, 3, threshold=1 / 255) == 0.0

    def test_all_white_one(self):
        img = Tensor(np.ones((1, 3, 16, 16)))
        assert dark_channel_sparsity(img, 3, threshold=0.5) == 1.0

    def test_blur_raises_sparsity(self, rng):
        from dcdeblur.data.synth import synthetic_sharp_image
        from dcdeblur.data.kernels import random_motion_kernel
        from dcdeblur.rng import derive_rng

        wins = 0
        trials = 20
        for i in range(trials):
            sharp = synthetic_sharp_image(derive_rng(500, 9, i), 64)
            kernel = random_motion_kernel(7, derive_rng(500, 6, i))
            blurred = apply_blur(sharp, kernel)
            s_sharp = dark_channel_sparsity(Tensor(sharp.data[None]), 15, 1 / 255)
            s_blur = dark_channel_sparsity(Tensor(blurred.data[None]), 15, 1 / 255)
            wins += s_blur >= s_sharp
        assert wins >= 0.9 * trials

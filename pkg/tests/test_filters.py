"""Side window filter tests: SAT fast path against a nested-loop oracle,
plus the edge/corner preservation properties that motivate the filter."""

import numpy as np
import pytest

from lfenet.errors import ContractError
from lfenet.filters import (SideWindowSpec, WINDOW_ORDER, box_filter,
                            side_window_box_filter, side_window_means)

from conftest import make_rng

# window geometry restated independently: inclusive offsets, radius units
ORACLE_OFFSETS = {
    "L": (-1, 1, -1, 0),
    "R": (-1, 1, 0, 1),
    "U": (-1, 0, -1, 1),
    "D": (0, 1, -1, 1),
    "NW": (-1, 0, -1, 0),
    "NE": (-1, 0, 0, 1),
    "SW": (0, 1, -1, 0),
    "SE": (0, 1, 0, 1),
}


def loop_side_window_means(img, r):
    """Per-pixel window means by direct block summation, no prefix sums."""
    h, w = img.shape
    padded = np.pad(img.astype(np.float64), r, mode="edge")
    means = np.zeros((8, h, w), dtype=np.float64)
    for k, name in enumerate(WINDOW_ORDER):
        dr0, dr1, dc0, dc1 = (o * r for o in ORACLE_OFFSETS[name])
        for i in range(h):
            for j in range(w):
                block = padded[i + r + dr0:i + r + dr1 + 1,
                               j + r + dc0:j + r + dc1 + 1]
                means[k, i, j] = block.mean()
    return means


def loop_side_window_once(img, r):
    """One filtering pass with an explicit first-minimal-index tie-break."""
    h, w = img.shape
    means = loop_side_window_means(img, r)
    out = np.zeros((h, w), dtype=np.float64)
    for i in range(h):
        for j in range(w):
            diffs = np.abs(means[:, i, j] - img[i, j])
            k = min(range(8), key=lambda t: (diffs[t], t))
            out[i, j] = means[k, i, j]
    return out


def quantized_image(rng, shape):
    """Random image on the 8-bit grid so box sums are exact in float64."""
    return rng.integers(0, 256, size=shape).astype(np.float64) / 256.0


class TestAgainstLoopOracle:
    @pytest.mark.parametrize("radius", [1, 2, 5])
    def test_means_bitwise_equal(self, radius):
        rng = make_rng(radius)
        img = quantized_image(rng, (11, 13))
        fast = side_window_means(img, radius)
        slow = loop_side_window_means(img, radius)
        np.testing.assert_array_equal(fast, slow)

    @pytest.mark.parametrize("radius", [1, 3])
    def test_single_pass_bitwise_equal(self, radius):
        rng = make_rng(50 + radius)
        img = quantized_image(rng, (9, 14))
        fast = side_window_box_filter(img, SideWindowSpec(radius=radius, iterations=1))
        np.testing.assert_array_equal(fast, loop_side_window_once(img, radius))

    def test_iterated_passes_compose(self):
        rng = make_rng(60)
        img = quantized_image(rng, (10, 10))
        three = side_window_box_filter(img, SideWindowSpec(radius=2, iterations=3))
        manual = img
        for _ in range(3):
            manual = side_window_box_filter(manual, SideWindowSpec(radius=2, iterations=1))
        np.testing.assert_array_equal(three, manual)


class TestEdgePreservation:
    def test_constant_image_is_fixed_point(self):
        img = np.full((12, 12), 0.375)
        out = side_window_box_filter(img, SideWindowSpec(radius=5, iterations=10))
        np.testing.assert_array_equal(out, img)

    def test_vertical_step_survives_box_filter_does_not(self):
        img = np.zeros((16, 16))
        img[:, 8:] = 1.0
        swf = side_window_box_filter(img, SideWindowSpec(radius=3, iterations=10))
        np.testing.assert_array_equal(swf, img)
        blurred = box_filter(img, 3)
        assert np.abs(blurred - img).max() > 0.3

    def test_horizontal_step_survives(self):
        img = np.zeros((16, 16))
        img[8:, :] = 0.75
        out = side_window_box_filter(img, SideWindowSpec(radius=5, iterations=10))
        np.testing.assert_array_equal(out, img)

    def test_right_angle_corner_survives(self):
        img = np.zeros((16, 16))
        img[:8, :8] = 1.0
        out = side_window_box_filter(img, SideWindowSpec(radius=3, iterations=5))
        np.testing.assert_array_equal(out, img)
        blurred = box_filter(img, 3)
        assert np.abs(blurred - img).max() > 0.3

    def test_isolated_spike_attenuated_neighbors_untouched(self):
        img = np.zeros((16, 16))
        img[8, 8] = 1.0
        out = side_window_box_filter(img, SideWindowSpec(radius=5, iterations=1))
        # the best window still contains the center, a corner quadrant of
        # (radius+1)^2 pixels, so one pass divides the spike by 36
        assert out[8, 8] == pytest.approx(1.0 / 36.0)
        rest = out.copy()
        rest[8, 8] = 0.0
        np.testing.assert_array_equal(rest, np.zeros((16, 16)))

    def test_noisy_step_edge_beats_box_filter(self):
        # the box filter trades edge sharpness for noise reduction; on a
        # strong edge with mild noise that trade loses
        rng = make_rng(71)
        clean = np.zeros((32, 32))
        clean[:, 16:] = 1.0
        noisy = clean + rng.normal(0.0, 0.05, clean.shape)
        side = side_window_box_filter(noisy, SideWindowSpec(radius=2, iterations=1))
        box = box_filter(noisy, 2)
        assert ((side - clean) ** 2).mean() < ((box - clean) ** 2).mean()

    def test_output_stays_in_input_range(self):
        rng = make_rng(70)
        img = quantized_image(rng, (20, 20))
        out = side_window_box_filter(img, SideWindowSpec(radius=4, iterations=10))
        assert out.min() >= img.min() and out.max() <= img.max()


class TestShapesAndContracts:
    def test_channelwise_application_matches_per_channel(self):
        rng = make_rng(80)
        img = quantized_image(rng, (3, 10, 12))
        spec = SideWindowSpec(radius=2, iterations=2)
        stacked = side_window_box_filter(img, spec)
        per = np.stack([side_window_box_filter(img[c], spec) for c in range(3)])
        np.testing.assert_array_equal(stacked, per)
        batched = side_window_box_filter(img[None], spec)
        np.testing.assert_array_equal(batched[0], stacked)

    def test_dtype_preserved(self):
        rng = make_rng(81)
        img = quantized_image(rng, (8, 8)).astype(np.float32)
        out = side_window_box_filter(img, SideWindowSpec(radius=1, iterations=1))
        assert out.dtype == np.float32

    def test_invalid_spec_rejected(self):
        with pytest.raises(ContractError):
            SideWindowSpec(radius=0)
        with pytest.raises(ContractError):
            SideWindowSpec(iterations=0)
        with pytest.raises(ContractError):
            side_window_means(np.zeros((4, 4)), 0)

    def test_non_image_rank_rejected(self):
        with pytest.raises(ContractError):
            side_window_box_filter(np.zeros(5), SideWindowSpec(radius=1, iterations=1))
        with pytest.raises(ContractError):
            side_window_means(np.zeros((2, 3, 4)), 1)

    def test_box_filter_constant_and_contract(self):
        img = np.full((9, 9), 0.25)
        np.testing.assert_array_equal(box_filter(img, 2), img)
        with pytest.raises(ContractError):
            box_filter(img, 0)

    def test_determinism(self):
        rng = make_rng(90)
        img = quantized_image(rng, (15, 15))
        spec = SideWindowSpec(radius=3, iterations=4)
        np.testing.assert_array_equal(side_window_box_filter(img, spec),
                                      side_window_box_filter(img, spec))

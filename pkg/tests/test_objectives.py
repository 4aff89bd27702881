"""Loss and metric tests: closed-form fixtures, independent sliding-window
SSIM oracle, naive-DFT frequency-loss oracle, finite-difference gradients."""

import math

import numpy as np
import pytest

from lfenet import objectives as O
from lfenet import tensor as T
from lfenet.errors import ContractError, NumericError

from conftest import make_rng
from test_tensor import naive_dft2


def sliding_window_ssim(a, b):
    """Direct per-window SSIM with explicit Gaussian weights, no convs."""
    half = (O.SSIM_WINDOW - 1) / 2.0
    xs = np.arange(O.SSIM_WINDOW) - half
    g1 = np.exp(-(xs ** 2) / (2.0 * O.SSIM_SIGMA ** 2))
    w = np.outer(g1, g1)
    w /= w.sum()
    c, h, wid = a.shape
    vals = []
    for ch in range(c):
        for i in range(h - O.SSIM_WINDOW + 1):
            for j in range(wid - O.SSIM_WINDOW + 1):
                pa = a[ch, i:i + O.SSIM_WINDOW, j:j + O.SSIM_WINDOW]
                pb = b[ch, i:i + O.SSIM_WINDOW, j:j + O.SSIM_WINDOW]
                mu_a = (w * pa).sum()
                mu_b = (w * pb).sum()
                va = (w * pa * pa).sum() - mu_a ** 2
                vb = (w * pb * pb).sum() - mu_b ** 2
                cov = (w * pa * pb).sum() - mu_a * mu_b
                num = (2 * mu_a * mu_b + O.SSIM_C1) * (2 * cov + O.SSIM_C2)
                den = (mu_a ** 2 + mu_b ** 2 + O.SSIM_C1) * (va + vb + O.SSIM_C2)
                vals.append(num / den)
    return float(np.mean(vals))


def naive_fre_loss(pred_l, pred_r, gt_l, gt_r):
    """Frequency loss recomputed through the direct double-loop DFT."""
    total = 0.0
    for p, g in ((pred_l, gt_l), (pred_r, gt_r)):
        dp = naive_dft2(p)
        dg = naive_dft2(g)
        total += np.abs(dp.real - dg.real).mean() + np.abs(dp.imag - dg.imag).mean()
    return total


class TestFreLoss:
    def test_identity_is_zero(self):
        rng = make_rng(1)
        img = rng.uniform(0, 1, (3, 8, 8))
        a = T.tensor(img, dtype=np.float64)
        assert O.fre_loss(a, a, a, a).item() == 0.0

    def test_constant_offset_gives_twice_abs_c(self):
        rng = make_rng(2)
        gt = rng.uniform(0.2, 0.7, (3, 12, 12))
        c = 0.11
        pl = T.tensor(gt + c, dtype=np.float64)
        gl = T.tensor(gt, dtype=np.float64)
        loss = O.fre_loss(pl, pl, gl, gl)
        # only the DC bin differs, by c*H*W in the real part per channel;
        # mean over the H*W bins leaves |c| per view
        assert loss.item() == pytest.approx(2 * abs(c), rel=1e-9)

    def test_matches_naive_dft_oracle(self):
        rng = make_rng(3)
        pl = rng.uniform(0, 1, (3, 6, 7))
        pr = rng.uniform(0, 1, (3, 6, 7))
        gl = rng.uniform(0, 1, (3, 6, 7))
        gr = rng.uniform(0, 1, (3, 6, 7))
        fast = O.fre_loss(*(T.tensor(x, dtype=np.float64) for x in (pl, pr, gl, gr)))
        assert fast.item() == pytest.approx(naive_fre_loss(pl, pr, gl, gr), rel=1e-10)

    def test_translation_of_both_images(self):
        # a half-period circular shift flips bin phases by exactly +-1, so
        # the loss is bit-for-bit preserved; generic shifts rotate phases
        # and move mass between real and imaginary parts, changing the
        # split L1 only slightly
        rng = make_rng(4)
        h = w = 16
        pred = rng.uniform(0, 1, (3, h, w))
        gt = rng.uniform(0, 1, (3, h, w))

        def loss_of(p, g):
            return O.fre_loss(T.tensor(p, dtype=np.float64), T.tensor(p, dtype=np.float64),
                              T.tensor(g, dtype=np.float64), T.tensor(g, dtype=np.float64)).item()

        base = loss_of(pred, gt)
        half = loss_of(np.roll(pred, (h // 2, w // 2), axis=(-2, -1)),
                       np.roll(gt, (h // 2, w // 2), axis=(-2, -1)))
        assert half == pytest.approx(base, rel=1e-12)
        for shift in ((1, 0), (3, 5)):
            v = loss_of(np.roll(pred, shift, axis=(-2, -1)),
                        np.roll(gt, shift, axis=(-2, -1)))
            assert v == pytest.approx(base, rel=0.02)

    def test_nonnegative_and_zero_only_at_equality(self):
        rng = make_rng(5)
        for k in range(5):
            gt = rng.uniform(0, 1, (1, 8, 8))
            pred = gt + rng.normal(0, 0.05, gt.shape)
            loss = O.fre_loss(T.tensor(pred, dtype=np.float64), T.tensor(gt, dtype=np.float64),
                              T.tensor(gt, dtype=np.float64), T.tensor(gt, dtype=np.float64))
            assert loss.item() > 0

    def test_gradient_matches_finite_differences(self):
        rng = make_rng(6)
        pl = T.tensor(rng.uniform(0, 1, (1, 3, 8, 8)), requires_grad=True, dtype=np.float64)
        pr = T.tensor(rng.uniform(0, 1, (1, 3, 8, 8)), requires_grad=True, dtype=np.float64)
        gl = T.tensor(rng.uniform(0, 1, (1, 3, 8, 8)), dtype=np.float64)
        gr = T.tensor(rng.uniform(0, 1, (1, 3, 8, 8)), dtype=np.float64)

        def build():
            return O.fre_loss(pl, pr, gl, gr)

        assert T.check_gradient(build, [pl, pr], rtol=1e-3) <= 0


class TestSsim:
    def test_identical_images_give_exactly_one(self):
        rng = make_rng(7)
        img = T.tensor(rng.uniform(0, 1, (3, 16, 16)).astype(np.float32))
        assert O.ssim(img, img).item() == 1.0

    def test_constant_images_closed_form(self):
        a = T.tensor(np.full((3, 16, 16), 0.2), dtype=np.float64)
        b = T.tensor(np.full((3, 16, 16), 0.8), dtype=np.float64)
        expect = (2 * 0.2 * 0.8 + O.SSIM_C1) / (0.2 ** 2 + 0.8 ** 2 + O.SSIM_C1)
        got = O.ssim(a, b).item()
        assert got == pytest.approx(expect, rel=1e-9)
        assert got == pytest.approx(0.4707, abs=1e-4)

    def test_symmetry(self):
        rng = make_rng(8)
        a = T.tensor(rng.uniform(0, 1, (3, 14, 14)), dtype=np.float64)
        b = T.tensor(rng.uniform(0, 1, (3, 14, 14)), dtype=np.float64)
        assert O.ssim(a, b).item() == pytest.approx(O.ssim(b, a).item(), rel=1e-12)

    def test_matches_sliding_window_oracle(self):
        rng = make_rng(9)
        a = rng.uniform(0, 1, (3, 15, 17))
        b = np.clip(a + rng.normal(0, 0.1, a.shape), 0, 1)
        fast = O.ssim(T.tensor(a, dtype=np.float64), T.tensor(b, dtype=np.float64)).item()
        assert fast == pytest.approx(sliding_window_ssim(a, b), abs=1e-5)

    def test_batch_matches_mean_of_singles(self):
        rng = make_rng(10)
        a = rng.uniform(0, 1, (2, 3, 12, 12))
        b = rng.uniform(0, 1, (2, 3, 12, 12))
        whole = O.ssim(T.tensor(a, dtype=np.float64), T.tensor(b, dtype=np.float64)).item()
        singles = [O.ssim(T.tensor(a[i], dtype=np.float64),
                          T.tensor(b[i], dtype=np.float64)).item() for i in range(2)]
        assert whole == pytest.approx(np.mean(singles), rel=1e-12)

    def test_image_smaller_than_window_rejected(self):
        small = T.tensor(np.zeros((3, 10, 16)))
        with pytest.raises(ContractError):
            O.ssim(small, small)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ContractError):
            O.ssim(T.zeros((3, 16, 16)), T.zeros((3, 16, 17)))

    def test_lower_for_noisier_images(self):
        rng = make_rng(11)
        base = rng.uniform(0.3, 0.7, (3, 24, 24))
        prev = 1.0
        for sigma in (0.02, 0.08, 0.2):
            noisy = np.clip(base + rng.normal(0, sigma, base.shape), 0, 1)
            val = O.ssim(T.tensor(base, dtype=np.float64), T.tensor(noisy, dtype=np.float64)).item()
            assert val < prev
            prev = val


class TestSpaLoss:
    def test_perfect_prediction_is_zero(self):
        rng = make_rng(12)
        img = T.tensor(rng.uniform(0, 1, (3, 16, 16)), dtype=np.float64)
        assert O.spa_loss(img, img, img, img).item() == 0.0

    def test_one_perfect_one_constant_view(self):
        rng = make_rng(13)
        good = T.tensor(rng.uniform(0, 1, (3, 16, 16)), dtype=np.float64)
        a = T.tensor(np.full((3, 16, 16), 0.2), dtype=np.float64)
        b = T.tensor(np.full((3, 16, 16), 0.8), dtype=np.float64)
        expect = 1.0 - (2 * 0.2 * 0.8 + O.SSIM_C1) / (0.2 ** 2 + 0.8 ** 2 + O.SSIM_C1)
        assert O.spa_loss(good, a, good, b).item() == pytest.approx(expect, rel=1e-9)

    def test_range(self):
        rng = make_rng(14)
        for k in range(4):
            pl = T.tensor(rng.uniform(0, 1, (3, 12, 12)), dtype=np.float64)
            gl = T.tensor(rng.uniform(0, 1, (3, 12, 12)), dtype=np.float64)
            val = O.spa_loss(pl, pl, gl, gl).item()
            assert 0.0 <= val <= 4.0

    def test_gradient_matches_finite_differences(self):
        rng = make_rng(15)
        pl = T.tensor(rng.uniform(0.2, 0.8, (1, 1, 16, 16)), requires_grad=True, dtype=np.float64)
        pr = T.tensor(rng.uniform(0.2, 0.8, (1, 1, 16, 16)), requires_grad=True, dtype=np.float64)
        gl = T.tensor(rng.uniform(0, 1, (1, 1, 16, 16)), dtype=np.float64)
        gr = T.tensor(rng.uniform(0, 1, (1, 1, 16, 16)), dtype=np.float64)

        def build():
            return O.spa_loss(pl, pr, gl, gr)

        assert T.check_gradient(build, [pl, pr], rtol=1e-3) <= 0


class TestPsnr:
    def test_identical_images_are_infinite(self):
        x = np.full((3, 8, 8), 0.4)
        assert O.psnr(x, x) == math.inf

    def test_known_mse_values(self):
        a = np.zeros((1, 10, 10))
        b = np.full((1, 10, 10), 0.1)
        assert O.psnr(a, b) == pytest.approx(20.0, rel=1e-12)
        assert O.psnr(np.zeros((4, 4)), np.ones((4, 4))) == pytest.approx(0.0, abs=1e-12)

    def test_peak_parameter(self):
        a = np.zeros((8, 8))
        b = np.full((8, 8), 25.5)
        assert O.psnr(a, b, peak=255.0) == pytest.approx(20.0, rel=1e-12)

    def test_tensor_inputs_accepted(self):
        t = T.tensor(np.full((3, 8, 8), 0.5, dtype=np.float32))
        assert O.psnr(t, t) == math.inf


class TestMseMap:
    def test_perfect_prediction_all_black(self):
        rng = make_rng(16)
        img = rng.uniform(0, 1, (3, 9, 9))
        np.testing.assert_array_equal(O.mse_map(img, img), np.zeros((9, 9)))

    def test_threshold_inclusive(self):
        pred = np.zeros((3, 2, 2))
        gt = np.zeros((3, 2, 2))
        pred[:, 0, 0] = 0.1  # channel-mean squared error exactly 0.01
        m = O.mse_map(pred, gt, threshold=0.01)
        assert m[0, 0] == 1.0 and m.sum() == 1.0

    def test_checkerboard_error_pattern(self):
        h = w = 8
        gt = np.zeros((3, h, w))
        pred = np.zeros((3, h, w))
        board = (np.indices((h, w)).sum(axis=0) % 2).astype(float)
        pred += 0.5 * board[None]
        np.testing.assert_array_equal(O.mse_map(pred, gt, threshold=0.1), board)

    def test_otsu_separates_bimodal_error(self):
        rng = make_rng(17)
        gt = np.zeros((3, 16, 16))
        pred = rng.normal(0, 0.01, (3, 16, 16))
        pred[:, 4:8, 4:8] += 0.6  # a patch of large error
        m = O.mse_map(pred, gt)
        assert m[4:8, 4:8].min() == 1.0
        outside = m.copy()
        outside[4:8, 4:8] = 0.0
        assert outside.sum() == 0.0

    def test_otsu_threshold_splits_two_clusters(self):
        vals = np.concatenate([np.full(500, 0.1), np.full(500, 0.9)])
        thr = O.otsu_threshold(vals)
        assert 0.1 < thr <= 0.9


class TestEvaluatePair:
    def _pair(self, rng):
        pl = T.tensor(rng.uniform(0.2, 0.8, (1, 3, 16, 16)), dtype=np.float64)
        pr = T.tensor(rng.uniform(0.2, 0.8, (1, 3, 16, 16)), dtype=np.float64)
        gl = T.tensor(rng.uniform(0.2, 0.8, (1, 3, 16, 16)), dtype=np.float64)
        gr = T.tensor(rng.uniform(0.2, 0.8, (1, 3, 16, 16)), dtype=np.float64)
        return pl, pr, gl, gr

    def test_total_is_sum_of_enabled_terms(self):
        rng = make_rng(18)
        pl, pr, gl, gr = self._pair(rng)
        total, bd = O.evaluate_pair(pl, pr, gl, gr)
        assert bd.total == pytest.approx(bd.l_fre + bd.l_spa, rel=1e-9)
        total_fre, bd_fre = O.evaluate_pair(pl, pr, gl, gr, use_spa=False)
        assert bd_fre.total == pytest.approx(bd_fre.l_fre, rel=1e-12)
        total_spa, bd_spa = O.evaluate_pair(pl, pr, gl, gr, use_fre=False)
        assert bd_spa.total == pytest.approx(bd_spa.l_spa, rel=1e-12)
        with pytest.raises(ContractError):
            O.evaluate_pair(pl, pr, gl, gr, use_fre=False, use_spa=False)

    def test_breakdown_metrics_match_direct_calls(self):
        rng = make_rng(19)
        pl, pr, gl, gr = self._pair(rng)
        _, bd = O.evaluate_pair(pl, pr, gl, gr)
        assert bd.psnr_left == pytest.approx(O.psnr(pl, gl), rel=1e-12)
        assert bd.ssim_right == pytest.approx(O.ssim(pr, gr).item(), rel=1e-12)

    def test_non_finite_breakdown_rejected(self):
        with pytest.raises(NumericError):
            O.LossBreakdown(l_fre=float("nan"), l_spa=0.0, total=0.0,
                            psnr_left=30.0, psnr_right=30.0,
                            ssim_left=0.9, ssim_right=0.9)

    def test_infinite_psnr_allowed_as_sentinel(self):
        bd = O.LossBreakdown(l_fre=0.0, l_spa=0.0, total=0.0,
                             psnr_left=math.inf, psnr_right=math.inf,
                             ssim_left=1.0, ssim_right=1.0)
        assert bd.psnr_left == math.inf

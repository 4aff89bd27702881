"""Degradation factory tests: gamma curve exactness, parameter-set
statistics, noise variance law, and dataset round trips."""

import numpy as np
import pytest

from lfenet import degrade as D
from lfenet.errors import ConfigError, DataError

from conftest import make_rng


def plain_params(**overrides):
    base = dict(alpha=0.67, beta=0.68, gamma=1.55, sigma_s=0.095, sigma_c=0.025, seed=11)
    base.update(overrides)
    return D.DegradeParams(**base)


class TestGammaDegrade:
    def test_identity_params(self):
        rng = make_rng(1)
        img = rng.uniform(0, 1, size=(3, 8, 8))
        p = D.DegradeParams(alpha=1.0, beta=1.0, gamma=1.0, sigma_s=0.09, sigma_c=0.02)
        np.testing.assert_allclose(D.gamma_degrade(img, p), img, rtol=1e-12)

    def test_known_point(self):
        p = D.DegradeParams(alpha=0.65, beta=0.65, gamma=1.5, sigma_s=0.09, sigma_c=0.02)
        out = D.gamma_degrade(np.array([[[1.0]]]), p)
        assert out[0, 0, 0] == pytest.approx(0.65 * 0.65 ** 1.5, abs=1e-7)
        assert out[0, 0, 0] == pytest.approx(0.34063, abs=5e-6)

    def test_zero_fixed_point_and_monotone(self):
        p = plain_params()
        xs = np.linspace(0, 1, 257)
        ys = D.gamma_degrade(xs[None, None], p)[0, 0]
        assert ys[0] == 0.0
        assert np.all(np.diff(ys) >= 0)
        assert ys.max() <= p.beta * p.alpha ** p.gamma + 1e-12

    def test_matches_direct_formula(self):
        rng = make_rng(2)
        x = rng.uniform(0, 1, size=10 ** 6)
        p = plain_params()
        direct = p.beta * (p.alpha * x) ** p.gamma
        np.testing.assert_allclose(D.gamma_degrade(x, p), direct, atol=1e-7)

    def test_float32_dtype_preserved(self):
        x = np.linspace(0, 1, 10, dtype=np.float32)
        assert D.gamma_degrade(x, plain_params()).dtype == np.float32

    def test_darkens_every_image(self):
        rng = make_rng(3)
        for i in range(5):
            img = rng.uniform(0.05, 1.0, size=(3, 16, 16))
            out = D.gamma_degrade(img, plain_params(seed=i))
            assert out.mean() < img.mean()

    def test_invalid_params_rejected(self):
        with pytest.raises(ConfigError):
            plain_params(alpha=0.0)
        with pytest.raises(ConfigError):
            plain_params(beta=1.5)
        with pytest.raises(ConfigError):
            plain_params(gamma=0.5)
        with pytest.raises(ConfigError):
            plain_params(sigma_s=0.5)
        with pytest.raises(ConfigError):
            plain_params(sigma_c=0.001)


class TestSampleParams:
    def test_set_frequency_and_ranges(self):
        rng = make_rng(4)
        n = 100_000
        in_set1 = 0
        for _ in range(n):
            p = D.sample_params(rng)
            one = 0.65 <= p.alpha <= 0.70 and 0.65 <= p.beta <= 0.70 and 1.5 <= p.gamma <= 1.6
            two = 0.80 <= p.alpha <= 0.85 and 0.80 <= p.beta <= 0.85 and 3.0 <= p.gamma <= 3.2
            assert one or two
            in_set1 += one
            assert 0.09 <= p.sigma_s <= 0.10 and 0.02 <= p.sigma_c <= 0.03
        assert 0.79 <= in_set1 / n <= 0.81

    def test_deterministic_sequence(self):
        seq1 = [D.sample_params(make_rng(5)) for _ in range(1)]
        a = [D.sample_params(r) for r in [make_rng(5)] for _ in range(10)]
        b = [D.sample_params(r) for r in [make_rng(5)] for _ in range(10)]
        assert a == b
        assert seq1[0] == a[0]


class TestAddNoise:
    def test_zero_noise_is_identity(self):
        rng = make_rng(6)
        img = rng.uniform(0, 1, size=(3, 8, 8))
        p = D.DegradeParams(alpha=0.67, beta=0.68, gamma=1.55, sigma_s=0.0, sigma_c=0.0)
        np.testing.assert_array_equal(D.add_noise(img, p, make_rng(0)), img)

    def test_variance_law_on_constant_half(self):
        p = D.DegradeParams(alpha=0.67, beta=0.68, gamma=1.55, sigma_s=0.09, sigma_c=0.02)
        img = np.full((1, 1000, 1000), 0.5)
        noisy = D.add_noise(img, p, make_rng(7), clip=False)
        target = 0.09 * 0.5 + 0.02 ** 2
        assert (noisy - img).var() == pytest.approx(target, rel=0.02)

    def test_variance_scales_with_intensity(self):
        # two constant levels: variance ratio must follow the linear law
        p = D.DegradeParams(alpha=0.67, beta=0.68, gamma=1.55, sigma_s=0.1, sigma_c=0.02)
        rng = make_rng(8)
        var = {}
        for level in (0.2, 0.8):
            img = np.full((700, 700), level)
            var[level] = (D.add_noise(img, p, rng, clip=False) - img).var()
        expect = (0.1 * 0.8 + 0.02 ** 2) / (0.1 * 0.2 + 0.02 ** 2)
        assert var[0.8] / var[0.2] == pytest.approx(expect, rel=0.03)

    def test_clipped_output_in_range(self):
        rng = make_rng(9)
        img = rng.uniform(0, 1, size=(3, 64, 64))
        out = D.add_noise(img, plain_params(), make_rng(10))
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_seeded_noise_bitwise_identical(self):
        img = np.full((3, 32, 32), 0.3)
        p = plain_params()
        a = D.add_noise(img, p, make_rng(11))
        b = D.add_noise(img, p, make_rng(11))
        np.testing.assert_array_equal(a, b)


class TestDegradePair:
    def test_same_curve_both_views_noise_independent(self):
        rng = make_rng(12)
        left, right = D.synthesize_stereo_pair(rng, 24, 32, disparity=4)
        p = plain_params()
        low_l, low_r = D.degrade_pair(left, right, p)
        # photometric consistency: overlapping content was darkened by the
        # same curve, so denoised means agree closely
        dark_l = D.gamma_degrade(left, p)
        dark_r = D.gamma_degrade(right, p)
        assert abs((low_l - dark_l).mean()) < 0.01
        assert abs((low_r - dark_r).mean()) < 0.01
        # the two views' noise realizations differ
        assert not np.array_equal(low_l - dark_l, low_r - dark_r)

    def test_pure_function_of_inputs_and_seed(self):
        rng = make_rng(13)
        left, right = D.synthesize_stereo_pair(rng, 16, 16, disparity=2)
        p = plain_params(seed=99)
        a = D.degrade_pair(left, right, p)
        b = D.degrade_pair(left, right, p)
        np.testing.assert_array_equal(a[0], b[0])
        np.testing.assert_array_equal(a[1], b[1])


class TestSyntheticScenes:
    def test_known_disparity_correspondence(self):
        rng = make_rng(14)
        d = 5
        left, right = D.synthesize_stereo_pair(rng, 20, 40, disparity=d)
        assert left.shape == right.shape == (3, 20, 40)
        # left column x matches right column x - d over the shared region
        np.testing.assert_array_equal(left[:, :, d:], right[:, :, :-d])

    def test_value_range_and_dtype(self):
        rng = make_rng(15)
        left, right = D.synthesize_stereo_pair(rng, 32, 32)
        for im in (left, right):
            assert im.dtype == np.float32
            assert 0.0 <= im.min() and im.max() <= 1.0

    def test_bad_geometry_rejected(self):
        with pytest.raises(DataError):
            D.synthesize_stereo_pair(make_rng(0), 1, 16)
        with pytest.raises(DataError):
            D.synthesize_stereo_pair(make_rng(0), 16, 16, disparity=-1)


class TestDatasetIO:
    def _write_gt(self, root, n, rng, unpaired=0):
        for side in ("left", "right"):
            (root / "left").mkdir(parents=True, exist_ok=True)
            (root / "right").mkdir(parents=True, exist_ok=True)
        for i in range(n):
            left, right = D.synthesize_stereo_pair(rng, 24, 24, disparity=2)
            D.save_png(str(root / "left" / f"s{i:03d}.png"), left)
            D.save_png(str(root / "right" / f"s{i:03d}.png"), right)
        for i in range(unpaired):
            img, _ = D.synthesize_stereo_pair(rng, 24, 24, disparity=2)
            D.save_png(str(root / "left" / f"orphan{i}.png"), img)

    def test_png_round_trip_quantizes_to_8bit(self, tmp_path):
        rng = make_rng(16)
        img = rng.uniform(0, 1, size=(3, 10, 12)).astype(np.float32)
        path = str(tmp_path / "x.png")
        D.save_png(path, img)
        back = D.load_png(path)
        assert back.shape == (3, 10, 12)
        assert np.abs(back - img).max() <= 0.5 / 255.0 + 1e-6
        # a second round trip is exact: the grid is a fixed point
        D.save_png(path, back)
        np.testing.assert_array_equal(D.load_png(path), back)

    def test_build_dataset_counts_and_manifest(self, tmp_path):
        gt = tmp_path / "gt"
        self._write_gt(gt, 3, make_rng(17))
        out = tmp_path / "out"
        records = D.build_dataset(str(gt), str(out), seed=7)
        assert len(records) == 3
        recs = D.read_manifest(str(out))
        assert len(recs) == 3
        for rec in recs:
            for key in ("alpha", "beta", "gamma", "sigma_s", "sigma_c"):
                assert isinstance(rec[key], float)
            sample = D.load_sample(str(out), rec)
            assert sample.low_left.shape == sample.gt_right.shape == (3, 24, 24)
            assert sample.low_left.mean() < sample.gt_left.mean()

    def test_build_dataset_deterministic_bytes(self, tmp_path):
        gt = tmp_path / "gt"
        self._write_gt(gt, 4, make_rng(18))
        out1, out2 = tmp_path / "o1", tmp_path / "o2"
        D.build_dataset(str(gt), str(out1), seed=21)
        D.build_dataset(str(gt), str(out2), seed=21)
        m1 = (out1 / D.MANIFEST_NAME).read_bytes()
        m2 = (out2 / D.MANIFEST_NAME).read_bytes()
        assert m1 == m2
        a = D.load_png(str(out1 / "low" / "left" / "s000.png"))
        b = D.load_png(str(out2 / "low" / "left" / "s000.png"))
        np.testing.assert_array_equal(a, b)

    def test_unpaired_names_skipped_with_warning(self, tmp_path):
        gt = tmp_path / "gt"
        self._write_gt(gt, 2, make_rng(19), unpaired=2)
        out = tmp_path / "out"
        records = D.build_dataset(str(gt), str(out), seed=3)
        assert len(records) == 2
        text = (out / D.MANIFEST_NAME).read_text()
        assert "# skipped_count: 2" in text
        assert "orphan0.png" in text

    def test_split_fractions_validated(self, tmp_path):
        gt = tmp_path / "gt"
        self._write_gt(gt, 1, make_rng(20))
        with pytest.raises(ConfigError):
            D.build_dataset(str(gt), str(tmp_path / "o"), seed=1, split_spec=(0.9, 0.2, 0.1))

    def test_missing_inputs_rejected(self, tmp_path):
        with pytest.raises(DataError):
            D.build_dataset(str(tmp_path / "nope"), str(tmp_path / "o"), seed=1)
        with pytest.raises(DataError):
            D.read_manifest(str(tmp_path))
        with pytest.raises(DataError):
            D.load_png(str(tmp_path / "missing.png"))

    def test_sample_shape_invariant_enforced(self):
        good = np.zeros((3, 4, 4), dtype=np.float32)
        bad = np.zeros((3, 4, 5), dtype=np.float32)
        with pytest.raises(DataError):
            D.StereoSample(id="x", low_left=good, low_right=bad,
                           gt_left=good, gt_right=good)

import math

import numpy as np
import pytest

from oracles import naive_mse, naive_speckle_index, naive_ssim
from ttvdespeckle.core import ImageGrid
from ttvdespeckle.errors import ContractViolation, ParameterError
from ttvdespeckle.metrics import (
    MetricsReport,
    evaluate,
    line_profile,
    local_mean_std,
    mssim,
    psnr,
    ratio_image,
    speckle_index,
    ssim_map,
)


class TestPsnr:
    def test_uniform_error_16(self):
        ref = np.full((8, 8), 100.0)
        # 10 log10(255^2 / 256), from mpmath
        assert psnr(ref, ref + 16) == pytest.approx(24.048403955560608, abs=1e-12)

    def test_identical_is_inf(self):
        a = np.ones((4, 4))
        assert psnr(a, a) == math.inf

    def test_matches_naive_mse(self, rng):
        a, b = rng.random((2, 9, 11)) * 255
        assert psnr(a, b) == pytest.approx(10 * math.log10(255**2 / naive_mse(a, b)), abs=1e-10)

    def test_uses_image_max_level(self):
        a = ImageGrid(np.zeros((4, 4)), 1.0)
        b = ImageGrid(np.full((4, 4), 0.1), 1.0)
        assert psnr(a, b) == pytest.approx(20.0, abs=1e-12)

    def test_mismatched_levels(self):
        with pytest.raises(ParameterError):
            psnr(ImageGrid(np.ones((2, 2)), 1.0), ImageGrid(np.ones((2, 2)), 255.0))

    def test_shape_mismatch(self):
        with pytest.raises(ContractViolation):
            psnr(np.ones((2, 2)), np.ones((2, 3)))


class TestSsim:
    def test_identical_is_one(self, rng):
        a = rng.random((20, 20)) * 255
        assert mssim(a, a) == 1.0

    def test_constant_pair(self):
        # (2*100*110 + C1) / (100^2 + 110^2 + C1), from mpmath
        assert mssim(np.full((16, 16), 100.0), np.full((16, 16), 110.0)) == pytest.approx(
            0.9954764440915066, abs=1e-12)

    def test_matches_naive(self, rng):
        a = rng.random((16, 14)) * 255
        b = np.clip(a + rng.normal(0, 20, a.shape), 0, 255)
        assert mssim(a, b) == pytest.approx(naive_ssim(a, b), abs=1e-8)

    def test_shared_translation_invariant(self, rng):
        a = rng.random((30, 30)) * 255
        b = np.clip(a + rng.normal(0, 15, a.shape), 0, 255)
        full = ssim_map(a, b)
        shifted = ssim_map(a[3:, 2:], b[3:, 2:])
        assert np.allclose(shifted, full[3:, 2:], rtol=0, atol=1e-12)

    def test_map_shape_and_bounds(self, rng):
        a, b = rng.random((2, 20, 25)) * 255
        m = ssim_map(a, b)
        assert m.shape == (10, 15)
        assert np.all(m <= 1 + 1e-12) and np.all(m >= -1 - 1e-12)

    def test_window_errors(self):
        with pytest.raises(ParameterError):
            mssim(np.ones((20, 20)), np.ones((20, 20)), window=10)
        with pytest.raises(ParameterError):
            mssim(np.ones((5, 5)), np.ones((5, 5)))


class TestSpeckleIndex:
    def test_constant_is_zero(self):
        assert speckle_index(np.full((9, 9), 40.0)) == 0.0

    def test_scale_invariant(self, rng):
        a = rng.uniform(1, 100, (12, 12))
        assert speckle_index(a) == pytest.approx(speckle_index(3.5 * a), abs=1e-12)

    def test_matches_naive(self, rng):
        a = rng.uniform(0, 255, (15, 13))
        assert speckle_index(a) == pytest.approx(naive_speckle_index(a, eta=1e-6), abs=1e-10)

    def test_zero_regions_ignored(self):
        a = np.zeros((6, 6))
        a[0, 0] = 10
        assert math.isfinite(speckle_index(a))

    def test_local_stats(self):
        mean, std = local_mean_std(np.arange(9.0).reshape(3, 3))
        assert mean[1, 1] == 4.0
        assert std[1, 1] == pytest.approx(math.sqrt(60 / 9))


class TestRatioAndProfile:
    def test_ratio_of_identical_is_one(self, circle):
        assert np.array_equal(ratio_image(circle, circle), np.ones(circle.shape))

    def test_ratio_guarded_against_zero(self):
        r = ratio_image(np.ones((2, 2)), np.zeros((2, 2)))
        assert np.all(np.isfinite(r))

    def test_profile(self, circle):
        prof = line_profile(circle, 64)
        assert len(prof) == 128
        assert prof[0] == (0, 50.0) and prof[64] == (64, 200.0)

    @pytest.mark.parametrize("row", [-1, 128])
    def test_profile_out_of_range(self, circle, row):
        with pytest.raises(ContractViolation):
            line_profile(circle, row)


def test_evaluate_report(circle):
    rep = evaluate(circle, circle, iterations=3)
    assert isinstance(rep, MetricsReport)
    assert rep.psnr_db == math.inf and rep.mssim == 1.0 and rep.iterations == 3
    assert set(rep.as_dict()) >= {"psnr_db", "mssim", "speckle_index", "iterations", "wall_seconds"}

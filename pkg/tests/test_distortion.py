"""Degradation synthesis and the tiling protocol."""

import numpy as np
import pytest

from pathroute.distortion import (DegradationSpec, NoiseSpec, apply_noise, dct_compress,
                                  extract_patches, gaussian_blur, generate_clean_image,
                                  make_dataset, merge_patches, noise_map_linear,
                                  noise_map_peaks, noise_map_uniform)
from pathroute.errors import ConfigError


class TestNoiseMaps:
    def test_uniform(self):
        m = noise_map_uniform(4, 6, 25.0)
        assert m.shape == (4, 6) and np.all(m == 25.0)
        assert np.all(noise_map_uniform(3, 3, 0.0) == 0.0)

    def test_linear_endpoints(self):
        m = noise_map_linear(5, 10)
        assert np.all(m[:, 0] == 0.0)
        assert np.all(m[:, -1] == 50.0)

    def test_linear_interpolation(self):
        m = noise_map_linear(2, 101)
        assert m[0, 50] == pytest.approx(25.0)

    def test_linear_column_constant(self):
        m = noise_map_linear(7, 20)
        assert np.all(m == m[0])

    def test_peaks_spans_range(self):
        m = noise_map_peaks(64, 64, seed=3)
        assert m.min() == pytest.approx(0.0, abs=1e-5)
        assert m.max() == pytest.approx(50.0, abs=1e-4)

    def test_peaks_deterministic(self):
        assert np.array_equal(noise_map_peaks(32, 32, seed=9), noise_map_peaks(32, 32, seed=9))

    def test_peaks_degenerate_constant_is_zero(self):
        m = noise_map_peaks(4, 4, seed=0, bumps=0)
        assert np.all(m == 0.0)


class TestApplyNoise:
    def test_zero_map_identity(self):
        img = np.random.default_rng(0).random((3, 16, 16)).astype(np.float32)
        out = apply_noise(img, np.zeros((16, 16), dtype=np.float32), seed=1)
        assert np.array_equal(out, img)

    def test_empirical_std(self):
        img = np.full((1, 256, 256), 0.5, dtype=np.float32)
        out = apply_noise(img, noise_map_uniform(256, 256, 25.0), seed=2)
        got = (out - img).std()
        assert abs(got - 25.0 / 255.0) < 0.03 * 25.0 / 255.0

    def test_seeded_repeatable(self):
        img = np.random.default_rng(1).random((3, 32, 32)).astype(np.float32)
        m = noise_map_uniform(32, 32, 30.0)
        assert np.array_equal(apply_noise(img, m, seed=7), apply_noise(img, m, seed=7))

    def test_channels_independent(self):
        img = np.full((3, 64, 64), 0.5, dtype=np.float32)
        out = apply_noise(img, noise_map_uniform(64, 64, 30.0), seed=3)
        assert not np.array_equal(out[0], out[1])

    def test_per_column_std_follows_map(self):
        img = np.full((1, 4096, 64), 0.5, dtype=np.float32)
        m = np.broadcast_to(np.linspace(10, 40, 64, dtype=np.float32), (4096, 64)).copy()
        out = apply_noise(img, m, seed=4)
        resid = out - img
        for c in (0, 32, 63):
            assert abs(resid[0, :, c].std() - m[0, c] / 255) < 0.05 * m[0, c] / 255

    def test_clamped(self):
        img = np.ones((1, 64, 64), dtype=np.float32)
        out = apply_noise(img, noise_map_uniform(64, 64, 50.0), seed=5)
        assert out.max() <= 1.0 and out.min() >= 0.0


class TestBlur:
    def test_sigma_zero_identity(self):
        img = np.random.default_rng(2).random((3, 12, 12)).astype(np.float32)
        assert np.array_equal(gaussian_blur(img, 0.0), img)

    def test_constant_unchanged(self):
        img = np.full((1, 20, 20), 0.37, dtype=np.float32)
        assert np.allclose(gaussian_blur(img, 2.0), 0.37, atol=1e-6)

    def test_impulse_center_matches_kernel_tabulation(self):
        sigma = 1.0
        radius = int(np.ceil(3 * sigma))
        t = np.arange(-radius, radius + 1, dtype=np.float64)
        k = np.exp(-0.5 * (t / sigma) ** 2)
        k /= k.sum()
        img = np.zeros((1, 21, 21), dtype=np.float32)
        img[0, 10, 10] = 1.0
        out = gaussian_blur(img, sigma)
        assert out[0, 10, 10] == pytest.approx(k[radius] ** 2, rel=1e-5)
        assert out[0, 10, 9] == pytest.approx(k[radius] * k[radius - 1], rel=1e-5)


class TestDctCompress:
    def test_constant_image_survives(self):
        for q in (10, 50, 100):
            img = np.full((3, 16, 16), 0.42, dtype=np.float32)
            out = dct_compress(img, q)
            assert np.abs(out - img).max() <= 1.0 / 255.0

    def test_quality_100_near_lossless_on_blocks(self):
        img = np.zeros((1, 8, 8), dtype=np.float32)
        img[0, :4] = 0.25
        out = dct_compress(img, 100)
        assert np.abs(out - img).max() <= 1.0 / 255.0 + 1e-6

    def test_mean_preserved(self):
        rng = np.random.default_rng(4)
        img = generate_clean_image(64, 64, rng)
        out = dct_compress(img, 50)
        assert abs(out.mean() - img.mean()) < 0.02

    def test_degradation_monotone_in_quality(self):
        rng = np.random.default_rng(5)
        imgs = [generate_clean_image(48, 48, rng) for _ in range(3)]
        for img in imgs:
            errs = [np.mean((dct_compress(img, q) - img) ** 2) for q in (10, 30, 50, 80, 100)]
            assert all(a >= b - 1e-9 for a, b in zip(errs, errs[1:]))

    def test_quality_range_checked(self):
        with pytest.raises(ConfigError):
            dct_compress(np.zeros((1, 8, 8), dtype=np.float32), 5)


class TestTiling:
    def test_single_patch(self):
        img = np.random.default_rng(6).random((3, 63, 63)).astype(np.float32)
        grid, patches = extract_patches(img)
        assert len(patches) == 1
        assert np.array_equal(patches[0], img)

    def test_116_gives_4(self):
        img = np.zeros((1, 116, 116), dtype=np.float32)
        grid, patches = extract_patches(img)
        assert grid.rows == (0, 53) and grid.cols == (0, 53)
        assert len(patches) == 4

    def test_512_gives_100(self):
        img = np.zeros((3, 512, 512), dtype=np.float32)
        grid, patches = extract_patches(img)
        assert len(grid.rows) == 10 and grid.rows[-1] == 449
        assert len(patches) == 100

    def test_anchor_oracle_brute_force(self):
        # every pixel covered, last anchor exactly dim - 63, anchors increasing
        for dim in (63, 64, 100, 116, 169, 200, 512):
            img = np.zeros((1, dim, dim), dtype=np.float32)
            grid, _ = extract_patches(img)
            covered = np.zeros(dim, dtype=bool)
            for a in grid.rows:
                covered[a : a + 63] = True
            assert covered.all()
            assert grid.rows[-1] == dim - 63
            assert all(b > a for a, b in zip(grid.rows, grid.rows[1:]))

    def test_roundtrip_within_1e7(self):
        for size in (63, 116, 169, 255):
            img = np.random.default_rng(size).random((3, size, size)).astype(np.float32)
            grid, patches = extract_patches(img)
            merged = merge_patches(patches, grid)
            assert merged.shape == img.shape
            assert np.abs(merged - img).max() < 1e-7

    def test_small_image_padded_then_cropped(self):
        img = np.random.default_rng(7).random((1, 40, 50)).astype(np.float32)
        grid, patches = extract_patches(img)
        assert all(p.shape == (1, 63, 63) for p in patches)
        merged = merge_patches(patches, grid)
        assert merged.shape == img.shape
        assert np.abs(merged - img).max() < 1e-7

    def test_overlap_averages(self):
        # two half-overlapping constant patches: overlap averages to 0.5
        img = np.zeros((1, 63, 73), dtype=np.float32)
        grid, patches = extract_patches(img)
        assert grid.cols == (0, 10)
        p0 = np.zeros((1, 63, 63), dtype=np.float32)
        p1 = np.ones((1, 63, 63), dtype=np.float32)
        merged = merge_patches([p0, p1], grid)
        assert np.all(merged[:, :, :10] == 0.0)
        assert np.all(merged[:, :, 10:63] == 0.5)
        assert np.all(merged[:, :, 63:] == 1.0)

    def test_count_mismatch(self):
        img = np.zeros((1, 116, 116), dtype=np.float32)
        grid, patches = extract_patches(img)
        with pytest.raises(ConfigError):
            merge_patches(patches[:-1], grid)


class TestDatasetStream:
    def test_count_zero_empty(self):
        ds = make_dataset(None, NoiseSpec("uniform", 50.0), count=0, seed=0)
        assert list(ds) == []

    def test_same_seed_identical(self):
        a = make_dataset(None, NoiseSpec("uniform", 50.0), count=5, seed=3)
        b = make_dataset(None, NoiseSpec("uniform", 50.0), count=5, seed=3)
        for sa, sb in zip(a, b):
            assert np.array_equal(sa.degraded, sb.degraded)
            assert np.array_equal(sa.clean, sb.clean)
            assert sa.meta == sb.meta

    def test_random_access_matches_iteration(self):
        ds = make_dataset(None, NoiseSpec("uniform", 50.0), count=4, seed=5)
        via_iter = [s.degraded for s in ds]
        via_index = [ds.sample(i).degraded for i in range(4)]
        for a, b in zip(via_iter, via_index):
            assert np.array_equal(a, b)

    def test_linear_spec_left_right_sigma(self):
        ds = make_dataset(None, NoiseSpec("linear", 50.0), count=400, seed=6)
        left, right = [], []
        for s in ds:
            half = ds.source_size // 2
            (left if s.meta["col"] + 63 // 2 < half else right).append(s.meta["sigma"])
        assert len(left) > 20 and len(right) > 20
        assert np.mean(left) < np.mean(right)

    def test_patch_shapes_and_range(self):
        ds = make_dataset(None, NoiseSpec("peaks", 50.0), count=3, seed=7)
        for s in ds:
            assert s.degraded.shape == (3, 63, 63)
            assert s.clean.shape == (3, 63, 63)
            assert 0.0 <= s.degraded.min() and s.degraded.max() <= 1.0

    def test_mixed_spec_metadata(self):
        ds = make_dataset(None, DegradationSpec(), count=3, seed=8)
        for s in ds:
            assert 0.0 <= s.meta["blur"] <= 5.0
            assert 0.0 <= s.meta["sigma"] <= 50.0
            assert 10.0 <= s.meta["quality"] <= 100.0

    def test_empty_sources_rejected(self):
        with pytest.raises(ConfigError):
            make_dataset([], NoiseSpec("uniform", 50.0), count=1, seed=0)

    def test_provided_sources_used(self):
        src = [np.full((3, 80, 80), 0.5, dtype=np.float32)]
        ds = make_dataset(src, NoiseSpec("uniform", 0.0), count=2, seed=9)
        for s in ds:
            assert np.all(s.clean == 0.5)


def test_spec_validation():
    with pytest.raises(ConfigError):
        NoiseSpec("bogus", 50.0)
    with pytest.raises(ConfigError):
        NoiseSpec("uniform", 51.0)
    with pytest.raises(ConfigError):
        DegradationSpec(quality=(5, 100))


def test_clean_images_deterministic_and_in_range():
    a = generate_clean_image(64, 64, np.random.default_rng(11))
    b = generate_clean_image(64, 64, np.random.default_rng(11))
    assert np.array_equal(a, b)
    assert a.min() >= 0.0 and a.max() <= 1.0
    assert a.std() > 0.01  # not degenerate

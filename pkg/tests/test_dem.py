"""Raster model, file IO, tiling, normalization, metric, and hillshade tests."""

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from terrasketch.dem import (
    DemFormatError,
    DemGrid,
    EvalReport,
    NormalizedPatch,
    denormalize,
    hillshade,
    hillshade_image,
    load_dem,
    mse,
    normalize_patch,
    save_dem,
    split_tiles,
)

from conftest import smooth_terrain


def write_ascii(path, heights, cellsize=2.0, nodata=None):
    h, w = heights.shape
    lines = [f"ncols {w}", f"nrows {h}", "xllcorner 0.0", "yllcorner 0.0",
             f"cellsize {cellsize}"]
    if nodata is not None:
        lines.append(f"NODATA_value {nodata}")
    for row in heights:
        lines.append(" ".join(str(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


class TestDemGrid:
    def test_rejects_nan(self):
        h = np.ones((4, 4))
        h[1, 1] = np.nan
        with pytest.raises(DemFormatError):
            DemGrid(h)

    def test_rejects_tiny_and_nonpositive_pixel(self):
        with pytest.raises(DemFormatError):
            DemGrid(np.ones((1, 5)))
        with pytest.raises(DemFormatError):
            DemGrid(np.ones((4, 4)), pixel_size_m=0.0)


class TestLoadDem:
    def test_ascii_constant_identity(self, tmp_path):
        write_ascii(tmp_path / "flat.asc", np.full((4, 4), 100.0))
        grid, n_filled = load_dem(tmp_path / "flat.asc")
        assert grid.shape == (4, 4)
        assert np.all(grid.heights == 100.0)
        assert n_filled == 0

    def test_image_scale_metadata(self, tmp_path):
        # oracle: hand linear map value / 65535 * (max - min) + min
        arr = np.full((4, 4), 32768, dtype=np.uint16)
        Image.fromarray(arr).save(tmp_path / "d.png")
        (tmp_path / "d.json").write_text(
            json.dumps({"h_min": 0.0, "h_max": 655.35, "pixel_size_m": 2.0})
        )
        grid, _ = load_dem(tmp_path / "d.png")
        expected = 32768 / 65535 * (655.35 - 0.0) + 0.0
        assert grid.heights[0, 0] == pytest.approx(expected, abs=1e-9)
        assert grid.heights[0, 0] == pytest.approx(327.68, abs=1e-6)

    def test_nodata_fill_counts(self, tmp_path):
        heights = np.full((4, 4), 50.0)
        heights[2, 2] = -9999.0
        write_ascii(tmp_path / "g.asc", heights, nodata=-9999)
        grid, n_filled = load_dem(tmp_path / "g.asc")
        assert n_filled == 1
        assert np.all(grid.heights == 50.0)

    def test_all_nodata_rejected(self, tmp_path):
        write_ascii(tmp_path / "bad.asc", np.full((3, 3), -9999.0), nodata=-9999)
        with pytest.raises(DemFormatError):
            load_dem(tmp_path / "bad.asc")

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_dem(tmp_path / "nope.asc")

    def test_garbage_body_rejected(self, tmp_path):
        (tmp_path / "junk.asc").write_text("ncols 2\nnrows 2\n1 2\n3 banana\n")
        with pytest.raises(DemFormatError):
            load_dem(tmp_path / "junk.asc")


class TestSaveRoundTrip:
    def test_bit_exact_roundtrip(self, tmp_path):
        grid = smooth_terrain(32, seed=5)
        save_dem(grid, tmp_path / "a.png")
        loaded, _ = load_dem(tmp_path / "a.png")
        save_dem(loaded, tmp_path / "b.png")
        assert (tmp_path / "a.png").read_bytes() == (tmp_path / "b.png").read_bytes()
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()

    def test_flat_grid_roundtrip(self, tmp_path):
        grid = DemGrid(np.full((8, 8), 321.5))
        save_dem(grid, tmp_path / "flat.png")
        loaded, _ = load_dem(tmp_path / "flat.png")
        assert np.allclose(loaded.heights, 321.5)


class TestSplitTiles:
    def test_exact_tiling(self):
        grid = smooth_terrain(400, seed=1)
        assert len(split_tiles(grid, 200, 200)) == 4

    def test_identity_single_tile(self):
        grid = smooth_terrain(200, seed=2)
        tiles = split_tiles(grid, 200)
        assert len(tiles) == 1
        assert np.array_equal(tiles[0].heights, grid.heights)

    def test_remainders_dropped(self):
        grid = DemGrid(np.arange(500 * 300, dtype=float).reshape(500, 300))
        # oracle: floor((dim - patch) / stride) + 1 per axis
        tiles = split_tiles(grid, 200, 200)
        assert len(tiles) == (((500 - 200) // 200 + 1) * ((300 - 200) // 200 + 1)) == 2

    def test_patch_larger_than_grid(self):
        with pytest.raises(ValueError):
            split_tiles(smooth_terrain(100, seed=3), 200)

    @given(
        h=st.integers(8, 80), w=st.integers(8, 80),
        p=st.integers(2, 8), s=st.integers(1, 8),
    )
    @settings(max_examples=60, deadline=None)
    def test_count_formula(self, h, w, p, s):
        if p > h or p > w:
            return
        grid = DemGrid(np.zeros((h, w)))
        tiles = split_tiles(grid, p, s)
        assert len(tiles) == ((h - p) // s + 1) * ((w - p) // s + 1)
        assert all(t.shape == (p, p) for t in tiles)


class TestNormalize:
    def test_flat_patch(self):
        patch = normalize_patch(DemGrid(np.full((16, 16), 300.0)), out_px=16)
        assert np.all(patch.values == 0.5)
        assert patch.h_min == patch.h_max == 300.0

    def test_midpoint(self):
        heights = np.full((16, 16), 150.0)
        heights[0, 0] = 100.0
        heights[-1, -1] = 200.0
        patch = normalize_patch(DemGrid(heights), out_px=16)
        assert patch.values[4, 4] == pytest.approx(0.5)

    def test_ramp_resample_preserves_linearity(self):
        # bilinear resampling reproduces linear surfaces exactly
        ramp = np.tile(np.linspace(0.0, 100.0, 200), (200, 1))
        patch = normalize_patch(DemGrid(ramp), out_px=256)
        assert patch.size_px == (256, 256)
        assert patch.values[0, 0] == pytest.approx(0.0, abs=1e-12)
        assert patch.values[0, -1] == pytest.approx(1.0, abs=1e-12)
        row = patch.values[100]
        assert np.all(np.diff(row) > 0)
        expected = np.linspace(0.0, 1.0, 256)
        assert np.allclose(row, expected, atol=1e-12)

    def test_denormalize_inverts(self):
        grid = smooth_terrain(64, seed=9)
        patch = normalize_patch(grid, out_px=64)
        back = denormalize(patch, pixel_size_m=grid.pixel_size_m)
        assert np.max(np.abs(back.heights - grid.heights)) < 1e-4

    def test_flat_denormalize(self):
        patch = NormalizedPatch(np.full((8, 8), 0.5), h_min=300.0, h_max=300.0)
        assert np.all(denormalize(patch).heights == 300.0)

    def test_endpoint_denormalize(self):
        values = np.zeros((8, 8))
        values[0, 0] = 1.0
        patch = NormalizedPatch(values, h_min=100.0, h_max=200.0)
        back = denormalize(patch)
        assert back.heights[1, 1] == 100.0
        assert back.heights[0, 0] == 200.0

    @given(seed=st.integers(0, 10_000))
    @settings(max_examples=25, deadline=None)
    def test_range_invariant(self, seed):
        grid = smooth_terrain(16, seed=seed)
        patch = normalize_patch(grid, out_px=16)
        assert patch.values.min() >= 0.0 and patch.values.max() <= 1.0


class TestMse:
    def test_zero_for_identical(self):
        grid = smooth_terrain(16, seed=4)
        assert mse(grid, grid) == 0.0

    def test_constant_offset(self):
        grid = smooth_terrain(16, seed=4)
        shifted = DemGrid(grid.heights + 3.0)
        assert mse(shifted, grid) == pytest.approx(9.0)

    def test_hand_computed(self):
        a = DemGrid(np.array([[1.0, -1.0], [2.0, 0.0]]) + 10.0)
        b = DemGrid(np.full((2, 2), 10.0))
        assert mse(a, b) == pytest.approx((1 + 1 + 4 + 0) / 4)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            mse(smooth_terrain(16, seed=1), smooth_terrain(32, seed=1))

    @given(seed=st.integers(0, 1000), c=st.floats(-50, 50))
    @settings(max_examples=25, deadline=None)
    def test_symmetry_and_offset(self, seed, c):
        a = smooth_terrain(12, seed=seed)
        b = DemGrid(a.heights + c)
        assert mse(a, b) == mse(b, a)
        assert mse(a, b) == pytest.approx(c * c, rel=1e-9, abs=1e-12)


class TestHillshade:
    def test_flat_equals_sin_altitude(self):
        shade = hillshade(DemGrid(np.full((16, 16), 500.0)), altitude_deg=45.0)
        assert np.allclose(shade, math.sin(math.radians(45.0)), atol=1e-12)

    def test_translation_invariance(self):
        grid = smooth_terrain(32, seed=6)
        lifted = DemGrid(grid.heights + 100.0)
        assert np.allclose(hillshade(grid), hillshade(lifted), atol=1e-9)

    def test_plane_facing_light_brighter(self):
        # oracle: closed-form Lambert shading of an analytic plane
        size, px = 32, 2.0
        rows, cols = np.mgrid[0:size, 0:size].astype(float)
        east = cols * px
        north = -rows * px  # row 0 is the north edge
        az, alt = math.radians(315.0), math.radians(45.0)
        lx, ly, lz = (math.sin(az) * math.cos(alt), math.cos(az) * math.cos(alt),
                      math.sin(alt))

        def analytic(a, b):
            # plane h = a*east + b*north; normal ~ (-a, -b, 1)
            return (-a * lx - b * ly + lz) / math.sqrt(1 + a * a + b * b)

        # rises east, falls north => normal leans north-west => faces the light
        toward = DemGrid(0.2 * east - 0.2 * north, pixel_size_m=px)
        away = DemGrid(-0.2 * east + 0.2 * north, pixel_size_m=px)
        sh_toward, sh_away = hillshade(toward), hillshade(away)
        assert sh_toward.mean() > sh_away.mean()
        assert sh_toward.mean() == pytest.approx(
            np.clip(analytic(0.2, -0.2), 0, 1), abs=1e-6)
        assert sh_away.mean() == pytest.approx(
            np.clip(analytic(-0.2, 0.2), 0, 1), abs=1e-6)

    def test_output_range_and_image(self):
        grid = smooth_terrain(32, seed=8, relief_m=500.0)
        shade = hillshade(grid)
        assert shade.min() >= 0.0 and shade.max() <= 1.0
        img = hillshade_image(shade)
        assert img.mode == "L" and img.size == (32, 32)


class TestEvalReport:
    def test_mean_and_count(self):
        rep = EvalReport(per_patch_mse=[1.0, 3.0])
        assert rep.mean_mse == 2.0 and rep.n_patches == 2

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            EvalReport(per_patch_mse=[])

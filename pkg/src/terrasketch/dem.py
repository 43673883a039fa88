"""Elevation raster handling: ingestion, tiling, normalization, metrics, hillshade.

Grids are plain 2D float arrays of elevation in meters at a fixed pixel size
(2 m/pixel by default). Two file formats are supported: ESRI ASCII grids and
16-bit grayscale PNGs with a JSON sidecar carrying the elevation range.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image
from scipy import ndimage

__all__ = [
    "DemGrid",
    "NormalizedPatch",
    "EvalReport",
    "DemFormatError",
    "load_dem",
    "save_dem",
    "split_tiles",
    "normalize_patch",
    "denormalize",
    "mse",
    "hillshade",
    "hillshade_image",
]

UINT16_MAX = 65535


class DemFormatError(ValueError):
    """Raised when a DEM file is unreadable or violates format invariants."""


@dataclass(frozen=True)
class DemGrid:
    """2D elevation raster in meters.

    heights must be finite, at least 2x2; pixel_size_m is the ground distance
    covered by one pixel.
    """

    heights: np.ndarray
    pixel_size_m: float = 2.0
    origin_id: Optional[str] = None

    def __post_init__(self):
        h = np.asarray(self.heights, dtype=np.float64)
        if h.ndim != 2:
            raise DemFormatError(f"heights must be 2D, got ndim={h.ndim}")
        if h.shape[0] < 2 or h.shape[1] < 2:
            raise DemFormatError(f"grid too small: {h.shape}")
        if not np.all(np.isfinite(h)):
            raise DemFormatError("heights contain non-finite values")
        if not self.pixel_size_m > 0:
            raise DemFormatError(f"pixel_size_m must be > 0, got {self.pixel_size_m}")
        object.__setattr__(self, "heights", h)

    @property
    def shape(self) -> tuple[int, int]:
        return self.heights.shape

    @property
    def h_min(self) -> float:
        return float(self.heights.min())

    @property
    def h_max(self) -> float:
        return float(self.heights.max())


@dataclass(frozen=True)
class NormalizedPatch:
    """Per-patch min-max normalized elevation values in [0, 1].

    (h_min, h_max) store the original range in meters so the affine map can be
    inverted. A flat source patch is represented as all 0.5 with h_min == h_max.
    """

    values: np.ndarray
    h_min: float
    h_max: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError(f"values must be 2D, got ndim={v.ndim}")
        if not np.all(np.isfinite(v)):
            raise ValueError("values contain non-finite entries")
        if v.min() < 0.0 or v.max() > 1.0:
            raise ValueError("values outside [0, 1]")
        if self.h_max < self.h_min:
            raise ValueError("h_max < h_min")
        if self.h_max == self.h_min and not np.all(v == 0.5):
            raise ValueError("flat patch must be all 0.5")
        object.__setattr__(self, "values", v)

    @property
    def size_px(self) -> tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True)
class EvalReport:
    """Per-patch and mean squared elevation error, in meters squared."""

    per_patch_mse: list[float]
    mean_mse: float = field(init=False)
    n_patches: int = field(init=False)

    def __post_init__(self):
        if len(self.per_patch_mse) == 0:
            raise ValueError("empty evaluation set")
        if any(m < 0 for m in self.per_patch_mse):
            raise ValueError("negative MSE entry")
        object.__setattr__(self, "mean_mse", float(np.mean(self.per_patch_mse)))
        object.__setattr__(self, "n_patches", len(self.per_patch_mse))


# ---------------------------------------------------------------------------
# File IO
# ---------------------------------------------------------------------------

_ASCII_SUFFIXES = {".asc", ".txt"}
_IMAGE_SUFFIXES = {".png", ".tif", ".tiff"}


def _sidecar_path(image_path: Path) -> Path:
    return image_path.with_suffix(".json")


def _fill_nodata(heights: np.ndarray, nodata_mask: np.ndarray) -> np.ndarray:
    """Replace masked cells with their nearest valid neighbor's value."""
    if not nodata_mask.any():
        return heights
    if nodata_mask.all():
        raise DemFormatError("raster contains no valid cells")
    _, (ii, jj) = ndimage.distance_transform_edt(nodata_mask, return_indices=True)
    return heights[ii, jj]


def _load_ascii_grid(path: Path) -> tuple[np.ndarray, float, int]:
    header: dict[str, float] = {}
    lines = path.read_text().splitlines()
    n_header = 0
    for line in lines:
        parts = line.split()
        if len(parts) == 2 and parts[0].lower() in {
            "ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value",
        }:
            header[parts[0].lower()] = float(parts[1])
            n_header += 1
        else:
            break
    if "ncols" not in header or "nrows" not in header:
        raise DemFormatError(f"{path}: missing ncols/nrows header")
    body = "\n".join(lines[n_header:])
    try:
        data = np.array(body.split(), dtype=np.float64)
    except ValueError as exc:
        raise DemFormatError(f"{path}: unparsable grid body") from exc
    nrows, ncols = int(header["nrows"]), int(header["ncols"])
    if data.size != nrows * ncols:
        raise DemFormatError(
            f"{path}: expected {nrows * ncols} values, found {data.size}"
        )
    heights = data.reshape(nrows, ncols)
    nodata = header.get("nodata_value")
    if nodata is not None:
        mask = (heights == nodata) | ~np.isfinite(heights)
    else:
        mask = ~np.isfinite(heights)
    n_filled = int(mask.sum())
    heights = _fill_nodata(heights, mask)
    cellsize = float(header.get("cellsize", 2.0))
    return heights, cellsize, n_filled


def _load_image_grid(path: Path) -> tuple[np.ndarray, float, int]:
    sidecar = _sidecar_path(path)
    if not sidecar.exists():
        raise DemFormatError(f"missing sidecar metadata: {sidecar}")
    meta = json.loads(sidecar.read_text())
    try:
        h_min, h_max = float(meta["h_min"]), float(meta["h_max"])
    except KeyError as exc:
        raise DemFormatError(f"{sidecar}: missing key {exc}") from exc
    pixel_size = float(meta.get("pixel_size_m", 2.0))
    raw = np.asarray(Image.open(path))
    if raw.ndim != 2:
        raise DemFormatError(f"{path}: expected single-band image, got shape {raw.shape}")
    heights = raw.astype(np.float64) / UINT16_MAX * (h_max - h_min) + h_min
    return heights, pixel_size, 0


def load_dem(path: str | Path) -> tuple[DemGrid, int]:
    """Load a DEM file, returning the grid and the count of filled no-data cells.

    Supported formats: ESRI ASCII grid (.asc/.txt) and 16-bit grayscale image
    (.png/.tif) with a same-stem .json sidecar holding h_min/h_max/pixel_size_m.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(str(path))
    suffix = path.suffix.lower()
    if suffix in _ASCII_SUFFIXES:
        heights, pixel_size, n_filled = _load_ascii_grid(path)
    elif suffix in _IMAGE_SUFFIXES:
        heights, pixel_size, n_filled = _load_image_grid(path)
    else:
        raise DemFormatError(f"unsupported DEM format: {path.name}")
    return DemGrid(heights, pixel_size_m=pixel_size, origin_id=path.stem), n_filled


def save_dem(grid: DemGrid, path: str | Path) -> None:
    """Write a grid as 16-bit grayscale PNG plus JSON sidecar.

    Quantization maps [h_min, h_max] onto [0, 65535]; reloading and re-saving
    reproduces both files byte for byte.
    """
    path = Path(path)
    h_min, h_max = grid.h_min, grid.h_max
    if h_max > h_min:
        q = np.rint((grid.heights - h_min) / (h_max - h_min) * UINT16_MAX)
    else:
        q = np.zeros_like(grid.heights)
    Image.fromarray(q.astype(np.uint16)).save(path, format="PNG")
    sidecar = {
        "h_min": h_min,
        "h_max": h_max,
        "pixel_size_m": grid.pixel_size_m,
    }
    _sidecar_path(path).write_text(json.dumps(sidecar, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# Tiling and normalization
# ---------------------------------------------------------------------------


def split_tiles(grid: DemGrid, patch_px: int = 200, stride_px: int = 200) -> list[DemGrid]:
    """Cut row-major patch_px x patch_px tiles; trailing remainders are dropped."""
    if patch_px <= 0 or stride_px <= 0:
        raise ValueError("patch_px and stride_px must be positive")
    H, W = grid.shape
    if patch_px > H or patch_px > W:
        raise ValueError(f"patch_px={patch_px} exceeds grid shape {grid.shape}")
    tiles = []
    for r in range((H - patch_px) // stride_px + 1):
        for c in range((W - patch_px) // stride_px + 1):
            i, j = r * stride_px, c * stride_px
            tag = f"{grid.origin_id or 'grid'}_r{r:03d}_c{c:03d}"
            tiles.append(
                DemGrid(
                    grid.heights[i : i + patch_px, j : j + patch_px].copy(),
                    pixel_size_m=grid.pixel_size_m,
                    origin_id=tag,
                )
            )
    return tiles


def _bilinear_resize(a: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Separable bilinear resample with corner-aligned sampling.

    Corner alignment keeps linear surfaces exactly linear and maps input
    corners onto output corners.
    """
    H, W = a.shape
    if (H, W) == (out_h, out_w):
        return a.copy()
    rows = np.linspace(0.0, H - 1.0, out_h)
    cols = np.linspace(0.0, W - 1.0, out_w)
    r0 = np.minimum(np.floor(rows).astype(int), H - 2)
    c0 = np.minimum(np.floor(cols).astype(int), W - 2)
    fr = (rows - r0)[:, None]
    fc = (cols - c0)[None, :]
    tl = a[np.ix_(r0, c0)]
    tr = a[np.ix_(r0, c0 + 1)]
    bl = a[np.ix_(r0 + 1, c0)]
    br = a[np.ix_(r0 + 1, c0 + 1)]
    top = tl * (1 - fc) + tr * fc
    bot = bl * (1 - fc) + br * fc
    return top * (1 - fr) + bot * fr


def normalize_patch(patch: DemGrid, out_px: int = 256) -> NormalizedPatch:
    """Resample bilinearly to out_px x out_px, then min-max map to [0, 1].

    A flat patch maps to all 0.5 with h_min == h_max.
    """
    resampled = _bilinear_resize(patch.heights, out_px, out_px)
    h_min, h_max = float(resampled.min()), float(resampled.max())
    if h_max > h_min:
        values = (resampled - h_min) / (h_max - h_min)
        values = np.clip(values, 0.0, 1.0)
    else:
        values = np.full_like(resampled, 0.5)
    return NormalizedPatch(values, h_min=h_min, h_max=h_max)


def denormalize(patch: NormalizedPatch, pixel_size_m: float = 2.0,
                origin_id: Optional[str] = None) -> DemGrid:
    """Invert normalize_patch's affine map using the stored (h_min, h_max)."""
    if patch.h_max > patch.h_min:
        heights = patch.values * (patch.h_max - patch.h_min) + patch.h_min
    else:
        heights = np.full_like(patch.values, patch.h_min)
    return DemGrid(heights, pixel_size_m=pixel_size_m, origin_id=origin_id)


# ---------------------------------------------------------------------------
# Metrics and rendering
# ---------------------------------------------------------------------------


def mse(generated: DemGrid, truth: DemGrid) -> float:
    """Mean squared elevation difference in meters squared."""
    if generated.shape != truth.shape:
        raise ValueError(f"shape mismatch: {generated.shape} vs {truth.shape}")
    diff = generated.heights - truth.heights
    return float(np.mean(diff * diff))


def hillshade(grid: DemGrid, azimuth_deg: float = 315.0,
              altitude_deg: float = 45.0) -> np.ndarray:
    """Lambertian relief shading in [0, 1] from central-difference normals.

    Azimuth is measured clockwise from north (row 0 = north edge); a flat grid
    shades uniformly at sin(altitude). Adding a constant to all heights leaves
    the output unchanged.
    """
    dz_dy_img, dz_dx = np.gradient(grid.heights, grid.pixel_size_m)
    dz_dn = -dz_dy_img  # image rows grow southward
    az = np.deg2rad(azimuth_deg)
    alt = np.deg2rad(altitude_deg)
    lx = np.sin(az) * np.cos(alt)
    ly = np.cos(az) * np.cos(alt)
    lz = np.sin(alt)
    norm = np.sqrt(1.0 + dz_dx ** 2 + dz_dn ** 2)
    shade = (-dz_dx * lx - dz_dn * ly + lz) / norm
    return np.clip(shade, 0.0, 1.0)


def hillshade_image(shade: np.ndarray) -> Image.Image:
    """Render a [0, 1] shade array as an 8-bit grayscale image."""
    return Image.fromarray(np.rint(np.clip(shade, 0.0, 1.0) * 255).astype(np.uint8))

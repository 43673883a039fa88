"""Topographic sketch extraction from elevation patches.

A sketch is a 3-channel binary raster: green marks elevation level-set
contours, red marks ridge lines, blue marks valley lines. Level-sets come from
band-index boundaries of the normalized elevation; ridge/valley lines from a
blurred-residual threshold followed by morphological thinning.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image
from scipy import ndimage
from skimage.morphology import skeletonize

from .dem import NormalizedPatch

__all__ = [
    "TopoMap",
    "extract_level_sets",
    "ridge_valley_candidates",
    "extract_ridge_valley",
    "compose_topo_map",
    "extract_topo_map",
]

EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)
MIN_COMPONENT_PX = 8


@dataclass(frozen=True)
class TopoMap:
    """Three binary masks of equal shape: red=ridges, green=level-sets, blue=valleys.

    No pixel may be both ridge and valley; use from_masks to build a map from
    raw candidate masks with that conflict resolved.
    """

    red: np.ndarray
    green: np.ndarray
    blue: np.ndarray

    def __post_init__(self):
        r, g, b = (np.asarray(m, dtype=bool) for m in (self.red, self.green, self.blue))
        if not (r.shape == g.shape == b.shape) or r.ndim != 2:
            raise ValueError(
                f"channel shapes differ: {r.shape}, {g.shape}, {b.shape}"
            )
        if np.any(r & b):
            raise ValueError("a pixel is marked both ridge and valley")
        object.__setattr__(self, "red", r)
        object.__setattr__(self, "green", g)
        object.__setattr__(self, "blue", b)

    @classmethod
    def from_masks(cls, red: np.ndarray, green: np.ndarray, blue: np.ndarray) -> "TopoMap":
        """Build a map, zeroing any pixel claimed by both ridge and valley."""
        r = np.asarray(red, dtype=bool)
        b = np.asarray(blue, dtype=bool)
        conflict = r & b
        return cls(r & ~conflict, np.asarray(green, dtype=bool), b & ~conflict)

    @property
    def size_px(self) -> tuple[int, int]:
        return self.red.shape

    def to_array(self) -> np.ndarray:
        """Channels-first float array (3, H, W) with values in {0.0, 1.0}."""
        return np.stack([self.red, self.green, self.blue]).astype(np.float32)

    def to_image(self) -> Image.Image:
        """8-bit RGB image with channels at 0/255."""
        rgb = np.stack([self.red, self.green, self.blue], axis=-1)
        return Image.fromarray((rgb * np.uint8(255)))

    @classmethod
    def from_image(cls, image: Image.Image) -> "TopoMap":
        """Read an RGB image, thresholding each channel at 128."""
        rgb = np.asarray(image.convert("RGB"))
        r, g, b = (rgb[..., k] >= 128 for k in range(3))
        return cls.from_masks(r, g, b)

    @classmethod
    def from_array(cls, arr: np.ndarray, threshold: float = 0.5) -> "TopoMap":
        """Threshold a real-valued (3, H, W) array in [0, 1] into a binary map."""
        if arr.ndim != 3 or arr.shape[0] != 3:
            raise ValueError(f"expected (3, H, W) array, got {arr.shape}")
        r, g, b = (arr[k] >= threshold for k in range(3))
        return cls.from_masks(r, g, b)


def _band_indices(values: np.ndarray, n_levels: int) -> np.ndarray:
    idx = np.floor(values * n_levels).astype(np.int64)
    return np.minimum(idx, n_levels - 1)


def extract_level_sets(patch: NormalizedPatch, n_levels: int = 10,
                       line_px: int = 1) -> np.ndarray:
    """Mark boundary pixels between consecutive elevation bands.

    Bands split [0, 1] at k/n_levels for k = 1..n_levels-1; a pixel is marked
    when its band index differs from any 4-neighbor's. line_px > 1 dilates the
    result with a line_px x line_px square.
    """
    if n_levels < 1:
        raise ValueError("n_levels must be positive")
    bands = _band_indices(patch.values, n_levels)
    mask = np.zeros(bands.shape, dtype=bool)
    mask[1:, :] |= bands[1:, :] != bands[:-1, :]
    mask[:-1, :] |= bands[:-1, :] != bands[1:, :]
    mask[:, 1:] |= bands[:, 1:] != bands[:, :-1]
    mask[:, :-1] |= bands[:, :-1] != bands[:, 1:]
    if line_px > 1:
        mask = ndimage.binary_dilation(mask, structure=np.ones((line_px, line_px), bool))
    return mask


def _mirrored_quantiles(values: np.ndarray, tau: float) -> tuple[float, float]:
    """Linear-interpolation quantiles at tau and 1 - tau.

    The two interpolation positions are computed as exact mirrors of each other
    so that negating the input swaps the two thresholds bit for bit.
    """
    s = np.sort(values, axis=None)
    n = s.size
    h_hi = (n - 1) * tau
    h_lo = (n - 1) - h_hi
    out = []
    for h in (h_hi, h_lo):
        lo = int(np.floor(h))
        lo = min(lo, n - 2) if n > 1 else 0
        frac = h - lo
        out.append(float(s[lo] * (1.0 - frac) + s[lo + 1] * frac) if n > 1 else float(s[0]))
    return out[0], out[1]


def _prune_short_components(mask: np.ndarray, min_px: int) -> np.ndarray:
    labels, n = ndimage.label(mask, structure=EIGHT_CONNECTED)
    if n == 0:
        return mask
    sizes = ndimage.sum_labels(np.ones_like(mask, dtype=np.int64), labels, np.arange(1, n + 1))
    keep = np.flatnonzero(sizes >= min_px) + 1
    return np.isin(labels, keep)


def ridge_valley_candidates(patch: NormalizedPatch, blur_sigma_px: float = 8.0,
                            tau_quantile: float = 0.92) -> tuple[np.ndarray, np.ndarray]:
    """Quantile-thresholded masks of the blurred-elevation residual.

    Residual r = values - gaussian_blur(values); ridge candidates are pixels
    above the tau_quantile of r, valley candidates below the (1 - tau_quantile)
    quantile. This stage is antisymmetric (negating the patch swaps the masks)
    and equivariant under 90-degree rotation.
    """
    if not 0.5 <= tau_quantile < 1.0:
        raise ValueError("tau_quantile must be in [0.5, 1)")
    residual = patch.values - ndimage.gaussian_filter(patch.values, sigma=blur_sigma_px)
    thr_hi, thr_lo = _mirrored_quantiles(residual, tau_quantile)
    return residual > thr_hi, residual < thr_lo


def extract_ridge_valley(patch: NormalizedPatch, blur_sigma_px: float = 8.0,
                         tau_quantile: float = 0.92) -> tuple[np.ndarray, np.ndarray]:
    """Thin ridge and valley line masks from the blurred-elevation residual.

    Candidate masks from ridge_valley_candidates are thinned to 1-px skeletons
    (Zhang-Suen iterative thinning as implemented by
    skimage.morphology.skeletonize, pinned because mask bit-patterns feed
    golden tests) and components under 8 px discarded. Negating the input
    swaps the two masks.
    """
    cand_ridge, cand_valley = ridge_valley_candidates(
        patch, blur_sigma_px=blur_sigma_px, tau_quantile=tau_quantile
    )
    ridge = _prune_short_components(skeletonize(cand_ridge), MIN_COMPONENT_PX)
    valley = _prune_short_components(skeletonize(cand_valley), MIN_COMPONENT_PX)
    return ridge, valley


def compose_topo_map(ridge: np.ndarray, levels: np.ndarray,
                     valley: np.ndarray) -> TopoMap:
    """Assemble channel masks into a TopoMap (red=ridge, green=levels, blue=valley).

    A pixel claimed as both ridge and valley is zeroed in both channels.
    """
    ridge, levels, valley = (np.asarray(m, dtype=bool) for m in (ridge, levels, valley))
    if not (ridge.shape == levels.shape == valley.shape):
        raise ValueError("mask shapes differ")
    return TopoMap.from_masks(ridge, levels, valley)


def extract_topo_map(patch: NormalizedPatch, n_levels: int = 10, line_px: int = 1,
                     blur_sigma_px: float = 8.0, tau_quantile: float = 0.92) -> TopoMap:
    """Full sketch extraction for one normalized patch."""
    levels = extract_level_sets(patch, n_levels=n_levels, line_px=line_px)
    ridge, valley = extract_ridge_valley(
        patch, blur_sigma_px=blur_sigma_px, tau_quantile=tau_quantile
    )
    return compose_topo_map(ridge, levels, valley)

"""Small image helpers: sketch rendering, hillshade previews, panel layout."""

from __future__ import annotations

import numpy as np
from PIL import Image

from .dem import DemGrid, hillshade, hillshade_image

__all__ = [
    "sketch_image",
    "normalized_dem_hillshade",
    "hstrip",
    "vstack_panels",
]

# Display-only vertical span assumed when shading a normalized [0, 1] patch;
# chosen to look like typical mountain relief at 2 m/pixel.
HILLSHADE_DISPLAY_SPAN_M = 300.0


def sketch_image(arr: np.ndarray) -> Image.Image:
    """Render a real-valued (3, H, W) sketch array in [0, 1] as 8-bit RGB."""
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise ValueError(f"expected (3, H, W), got {arr.shape}")
    rgb = np.moveaxis(np.clip(arr, 0.0, 1.0), 0, -1)
    return Image.fromarray(np.rint(rgb * 255).astype(np.uint8))


def normalized_dem_hillshade(values01: np.ndarray,
                             span_m: float = HILLSHADE_DISPLAY_SPAN_M,
                             pixel_size_m: float = 2.0) -> Image.Image:
    """Shade a normalized patch by pretending it spans span_m of relief."""
    grid = DemGrid(np.clip(values01, 0.0, 1.0) * span_m, pixel_size_m=pixel_size_m)
    return hillshade_image(hillshade(grid))


def hstrip(images: list[Image.Image], gap_px: int = 4) -> Image.Image:
    """Concatenate equally-sized images horizontally with a white gap."""
    if not images:
        raise ValueError("no images")
    imgs = [im.convert("RGB") for im in images]
    h = max(im.height for im in imgs)
    w = sum(im.width for im in imgs) + gap_px * (len(imgs) - 1)
    strip = Image.new("RGB", (w, h), (255, 255, 255))
    x = 0
    for im in imgs:
        strip.paste(im, (x, 0))
        x += im.width + gap_px
    return strip


def vstack_panels(rows: list[Image.Image], gap_px: int = 4) -> Image.Image:
    """Stack row strips vertically with a white gap."""
    if not rows:
        raise ValueError("no rows")
    rows = [r.convert("RGB") for r in rows]
    w = max(r.width for r in rows)
    h = sum(r.height for r in rows) + gap_px * (len(rows) - 1)
    panel = Image.new("RGB", (w, h), (255, 255, 255))
    y = 0
    for r in rows:
        panel.paste(r, (0, y))
        y += r.height + gap_px
    return panel

#!/usr/bin/env python3
"""Generate a corpus of synthetic DEM tiles for desk-scale experiments.

Each tile is smoothed noise plus a gentle tilt, saved as 16-bit PNG with a
JSON sidecar, ready for `terrasketch prepare`.

Usage:
    python scripts/make_synthetic_dems.py --out-dir /tmp/dems --n 4 --size 400 --seed 0
"""

import argparse
from pathlib import Path

import numpy as np
from scipy import ndimage

from terrasketch.dem import DemGrid, save_dem


def synthetic_grid(size: int, seed: int, relief_m: float, base_m: float) -> DemGrid:
    rng = np.random.default_rng(seed)
    field = ndimage.gaussian_filter(rng.standard_normal((size, size)), size / 50)
    field = (field - field.min()) / (field.max() - field.min())
    yy, xx = np.mgrid[0:size, 0:size] / max(size - 1, 1)
    heights = base_m + relief_m * (0.8 * field + 0.2 * (xx + yy) / 2)
    return DemGrid(heights, pixel_size_m=2.0, origin_id=f"synth{seed}")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", required=True)
    parser.add_argument("--n", type=int, default=4)
    parser.add_argument("--size", type=int, default=400)
    parser.add_argument("--relief-m", type=float, default=250.0)
    parser.add_argument("--base-m", type=float, default=900.0)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for k in range(args.n):
        grid = synthetic_grid(args.size, args.seed + k, args.relief_m, args.base_m)
        save_dem(grid, out_dir / f"synth{args.seed + k:03d}.png")
    print(f"wrote {args.n} tiles of {args.size}x{args.size} to {out_dir}")


if __name__ == "__main__":
    main()

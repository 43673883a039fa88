"""Paired sketch/DEM dataset construction and manifest handling.

A dataset is a directory of paired files — an 8-bit RGB sketch PNG and a
16-bit DEM PNG with JSON sidecar per patch — described by a JSON-lines
manifest with one record per pair.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .dem import (
    DemGrid,
    NormalizedPatch,
    load_dem,
    normalize_patch,
    denormalize,
    save_dem,
    split_tiles,
)
from .sketch import TopoMap, extract_topo_map

__all__ = [
    "PairRecord",
    "write_manifest",
    "read_manifest",
    "sample_split",
    "build_dataset",
    "load_pair",
    "PairArrayDataset",
    "SketchArrayDataset",
]

DEFAULT_TRAIN_N = 3000
DEFAULT_TEST_N = 878


@dataclass(frozen=True)
class PairRecord:
    pair_id: str
    topo_path: str
    dem_path: str
    split: str  # "train" or "test"

    def to_json(self) -> str:
        return json.dumps(
            {
                "pair_id": self.pair_id,
                "topo_path": self.topo_path,
                "dem_path": self.dem_path,
                "split": self.split,
            },
            sort_keys=True,
        )


def write_manifest(records: Sequence[PairRecord], path: str | Path) -> None:
    """Write records as JSON lines, sorted by pair_id."""
    path = Path(path)
    ordered = sorted(records, key=lambda r: r.pair_id)
    path.write_text("".join(r.to_json() + "\n" for r in ordered))


def read_manifest(path: str | Path) -> list[PairRecord]:
    records = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        d = json.loads(line)
        records.append(PairRecord(d["pair_id"], d["topo_path"], d["dem_path"], d["split"]))
    return records


def sample_split(pool_ids: Sequence[str], train_n: int, test_n: int,
                 seed: int) -> dict[str, str]:
    """Seeded disjoint train/test sampling from a patch-id pool.

    The pool is sorted before shuffling so membership depends only on the ids
    and the seed, not on discovery order.
    """
    ids = sorted(pool_ids)
    if len(set(ids)) != len(ids):
        raise ValueError("pool contains duplicate ids")
    if train_n + test_n > len(ids):
        raise ValueError(
            f"insufficient patches: need {train_n + test_n}, have {len(ids)}"
        )
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(ids))
    chosen = {}
    for k in perm[:train_n]:
        chosen[ids[k]] = "train"
    for k in perm[train_n : train_n + test_n]:
        chosen[ids[k]] = "test"
    return chosen


def _dem_file_pool(dem_dir: Path) -> list[Path]:
    files = sorted(
        p for p in dem_dir.iterdir()
        if p.suffix.lower() in {".asc", ".txt", ".png", ".tif", ".tiff"}
    )
    if not files:
        raise FileNotFoundError(f"no DEM files found in {dem_dir}")
    return files


def build_dataset(dem_dir: str | Path, out_dir: str | Path,
                  train_n: int = DEFAULT_TRAIN_N, test_n: int = DEFAULT_TEST_N,
                  seed: int = 0, patch_px: int = 200, stride_px: int = 200,
                  out_px: int = 256, n_levels: int = 10, line_px: int = 1,
                  blur_sigma_px: float = 8.0, tau_quantile: float = 0.92,
                  ) -> tuple[Path, list[PairRecord]]:
    """Tile source DEMs, extract sketches, and write a paired dataset.

    Sampling of the train/test membership is seeded and reproducible; the
    manifest is written sorted by pair id. Returns the manifest path and the
    selected records.
    """
    dem_dir, out_dir = Path(dem_dir), Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "pairs").mkdir(exist_ok=True)

    tiles: dict[str, DemGrid] = {}
    for f in _dem_file_pool(dem_dir):
        grid, _ = load_dem(f)
        for tile in split_tiles(grid, patch_px=patch_px, stride_px=stride_px):
            if tile.origin_id in tiles:
                raise ValueError(f"duplicate tile id {tile.origin_id}")
            tiles[tile.origin_id] = tile

    membership = sample_split(list(tiles), train_n, test_n, seed)

    records = []
    for pair_id in sorted(membership):
        patch = normalize_patch(tiles[pair_id], out_px=out_px)
        topo = extract_topo_map(
            patch, n_levels=n_levels, line_px=line_px,
            blur_sigma_px=blur_sigma_px, tau_quantile=tau_quantile,
        )
        topo_path = out_dir / "pairs" / f"{pair_id}_topo.png"
        dem_path = out_dir / "pairs" / f"{pair_id}_dem.png"
        topo.to_image().save(topo_path, format="PNG")
        save_dem(denormalize(patch, pixel_size_m=tiles[pair_id].pixel_size_m,
                             origin_id=pair_id), dem_path)
        records.append(
            PairRecord(
                pair_id=pair_id,
                topo_path=str(topo_path.relative_to(out_dir)),
                dem_path=str(dem_path.relative_to(out_dir)),
                split=membership[pair_id],
            )
        )

    manifest_path = out_dir / "manifest.jsonl"
    write_manifest(records, manifest_path)
    return manifest_path, records


def load_pair(record: PairRecord, root: str | Path) -> tuple[TopoMap, NormalizedPatch]:
    """Load one manifest record into a sketch and its normalized patch."""
    from PIL import Image

    root = Path(root)
    topo = TopoMap.from_image(Image.open(root / record.topo_path))
    grid, _ = load_dem(root / record.dem_path)
    patch = normalize_patch(grid, out_px=grid.shape[0])
    return topo, patch


class SketchArrayDataset:
    """Indexable sketch arrays (3, H, W) float32 for stage-1 training."""

    def __init__(self, records: Sequence[PairRecord], root: str | Path):
        self.records = list(records)
        self.root = Path(root)

    def __len__(self) -> int:
        return len(self.records)

    def __getitem__(self, i: int) -> np.ndarray:
        topo, _ = load_pair(self.records[i], self.root)
        return topo.to_array()


class PairArrayDataset:
    """Indexable (sketch array, normalized DEM array) pairs for stage-2 training."""

    def __init__(self, records: Sequence[PairRecord], root: str | Path):
        self.records = list(records)
        self.root = Path(root)

    def __len__(self) -> int:
        return len(self.records)

    def __getitem__(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        topo, patch = load_pair(self.records[i], self.root)
        return topo.to_array(), patch.values.astype(np.float32)

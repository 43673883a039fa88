"""Checkpoint archives: weights + config JSON + loss-trace CSV in one zip.

Archive entries carry a fixed timestamp so that identical training runs
produce byte-identical checkpoint files.
"""

from __future__ import annotations

import csv
import io
import json
import zipfile
from pathlib import Path
from typing import Sequence

import torch

__all__ = ["write_archive", "read_archive", "CheckpointError"]

_EPOCH_ZERO = (1980, 1, 1, 0, 0, 0)


class CheckpointError(RuntimeError):
    """Raised for unreadable or mismatched checkpoint archives."""


def _entry(name: str) -> zipfile.ZipInfo:
    info = zipfile.ZipInfo(name, date_time=_EPOCH_ZERO)
    info.compress_type = zipfile.ZIP_DEFLATED
    return info


def write_archive(path: str | Path, kind: str, config: dict,
                  state_dicts: dict[str, dict], epoch: int,
                  trace_header: Sequence[str], trace_rows: Sequence[Sequence]) -> None:
    """Write a checkpoint archive atomically (tmp file + rename)."""
    path = Path(path)
    meta = {"kind": kind, "epoch": epoch, "config": config}

    weights_buf = io.BytesIO()
    torch.save(state_dicts, weights_buf)

    trace_buf = io.StringIO()
    writer = csv.writer(trace_buf)
    writer.writerow(trace_header)
    writer.writerows(trace_rows)

    tmp = path.with_suffix(path.suffix + ".tmp")
    with zipfile.ZipFile(tmp, "w") as zf:
        zf.writestr(_entry("meta.json"), json.dumps(meta, sort_keys=True, indent=2))
        zf.writestr(_entry("weights.pt"), weights_buf.getvalue())
        zf.writestr(_entry("trace.csv"), trace_buf.getvalue())
    tmp.replace(path)


def read_archive(path: str | Path, expected_kind: str | None = None) -> dict:
    """Read a checkpoint archive into {kind, epoch, config, state_dicts, trace}."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(str(path))
    try:
        with zipfile.ZipFile(path) as zf:
            meta = json.loads(zf.read("meta.json"))
            state_dicts = torch.load(
                io.BytesIO(zf.read("weights.pt")), weights_only=True
            )
            trace_text = zf.read("trace.csv").decode()
    except (zipfile.BadZipFile, KeyError) as exc:
        raise CheckpointError(f"unreadable checkpoint: {path}") from exc
    if expected_kind is not None and meta.get("kind") != expected_kind:
        raise CheckpointError(
            f"{path}: expected a {expected_kind!r} checkpoint, found {meta.get('kind')!r}"
        )
    rows = list(csv.reader(io.StringIO(trace_text)))
    return {
        "kind": meta["kind"],
        "epoch": meta["epoch"],
        "config": meta["config"],
        "state_dicts": state_dicts,
        "trace_header": rows[0] if rows else [],
        "trace_rows": rows[1:],
    }

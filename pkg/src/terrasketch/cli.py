"""Command-line entry point.

One multiplexed binary with subcommands: prepare, train-vae, train-gan,
generate, interpolate, variants, eval, serve. Option precedence is built-in
defaults < --config JSON file < explicit flags. Progress lines go to stderr;
artifacts and run manifests go only to the declared paths.

Exit codes: 0 ok, 2 usage/input error, 3 runtime failure. Errors print a
single machine-parsable line "error: <message>" to stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from PIL import Image

from .checkpoint import CheckpointError
from .cgan import (
    GanCheckpoint,
    GanConfig,
    evaluate_checkpoint,
    generate_patch,
    train_cgan,
)
from .dataset import (
    DEFAULT_TEST_N,
    DEFAULT_TRAIN_N,
    PairArrayDataset,
    SketchArrayDataset,
    build_dataset,
    load_pair,
    read_manifest,
)
from .dem import DemFormatError, DemGrid, save_dem
from .latent import (
    DEFAULT_INTERPOLATION_GAMMAS,
    InterpolationRequest,
    VariantRequest,
    interpolate_terrains,
    sample_variants,
)
from .sketch import TopoMap
from .vae import (
    TopoVae,
    TrainingDivergedError,
    VaeCheckpoint,
    VaeConfig,
    reconstruct_map,
    train_vae,
)
from . import viz

__all__ = ["main"]

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_RUNTIME = 3


class InputError(ValueError):
    """User-facing input problem: bad paths, bad formats, bad options."""


@dataclass
class RunManifest:
    """Record of one command run: resolved config, paths, artifact checksums."""

    command: str
    config: dict
    inputs: dict
    outputs: dict = field(default_factory=dict)
    seed: Optional[int] = None
    timestamp: str = ""

    def add_artifact(self, path: str | Path) -> None:
        p = Path(path)
        self.outputs[str(p)] = hashlib.sha256(p.read_bytes()).hexdigest()

    def write(self, path: str | Path) -> None:
        self.timestamp = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
        p = Path(path)
        tmp = p.with_suffix(p.suffix + ".tmp")
        tmp.write_text(json.dumps(dataclasses.asdict(self), sort_keys=True, indent=2) + "\n")
        tmp.replace(p)


# ---------------------------------------------------------------------------
# Config resolution
# ---------------------------------------------------------------------------


def _load_config_file(path: Optional[str]) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise InputError(f"config file not found: {p}")
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"config file is not valid JSON: {p}: {exc}") from exc
    if not isinstance(data, dict):
        raise InputError(f"config file must hold a JSON object: {p}")
    return data


def _resolve(dataclass_type, file_cfg: dict, overrides: dict):
    """defaults < config file < flags, rejecting unknown config keys."""
    names = {f.name for f in dataclasses.fields(dataclass_type)}
    unknown = set(file_cfg) - names
    if unknown:
        raise InputError(f"unknown config keys: {sorted(unknown)}")
    merged = dict(file_cfg)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return dataclass_type(**merged)
    except (TypeError, ValueError) as exc:
        raise InputError(f"invalid configuration: {exc}") from exc


def _require(path: Optional[str], what: str) -> Path:
    if path is None:
        raise InputError(f"missing required option: {what}")
    p = Path(path)
    if not p.exists():
        raise InputError(f"{what} not found: {p}")
    return p


def _progress(msg: str) -> None:
    print(msg, file=sys.stderr)


# ---------------------------------------------------------------------------
# Shared loading helpers
# ---------------------------------------------------------------------------


def _load_sketch(path: Path, size: int) -> TopoMap:
    try:
        img = Image.open(path)
        img.load()
    except OSError as exc:
        raise InputError(f"unreadable sketch image: {path}: {exc}") from exc
    if img.size != (size, size):
        img = img.convert("RGB").resize((size, size), Image.NEAREST)
    return TopoMap.from_image(img)


def _records_for_split(manifest_path: Path, split: str):
    records = [r for r in read_manifest(manifest_path) if r.split == split]
    if not records:
        raise InputError(f"no '{split}' records in {manifest_path}")
    return records, manifest_path.parent


def _write_dem_outputs(values01: np.ndarray, out_path: Path,
                       manifest: RunManifest) -> None:
    """Write a normalized patch as 16-bit DEM + sidecar + hillshade preview."""
    grid = DemGrid(np.clip(values01, 0.0, 1.0), pixel_size_m=2.0)
    save_dem(grid, out_path)
    shade_path = out_path.with_name(out_path.stem + "_hillshade.png")
    viz.normalized_dem_hillshade(values01).save(shade_path, format="PNG")
    manifest.add_artifact(out_path)
    manifest.add_artifact(out_path.with_suffix(".json"))
    manifest.add_artifact(shade_path)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


@dataclass
class PrepareConfig:
    train_n: int = DEFAULT_TRAIN_N
    test_n: int = DEFAULT_TEST_N
    seed: int = 0
    patch_px: int = 200
    stride_px: int = 200
    out_px: int = 256
    n_levels: int = 10
    line_px: int = 1
    blur_sigma_px: float = 8.0
    tau_quantile: float = 0.92


def cmd_prepare(args) -> RunManifest:
    dem_dir = _require(args.dem_dir, "--dem-dir")
    out_dir = Path(args.out_dir)
    cfg = _resolve(PrepareConfig, _load_config_file(args.config), {
        "train_n": args.train_n, "test_n": args.test_n, "seed": args.seed,
        "patch_px": args.patch_px, "stride_px": args.stride_px,
        "out_px": args.out_px, "n_levels": args.n_levels,
        "line_px": args.line_px, "blur_sigma_px": args.blur_sigma_px,
        "tau_quantile": args.tau_quantile,
    })
    manifest_path, records = build_dataset(
        dem_dir, out_dir, **dataclasses.asdict(cfg)
    )
    _progress(f"prepared {len(records)} pairs -> {manifest_path}")
    run = RunManifest(
        command="prepare",
        config=dataclasses.asdict(cfg),
        inputs={"dem_dir": str(dem_dir)},
        seed=cfg.seed,
    )
    run.add_artifact(manifest_path)
    run.outputs["n_pairs"] = len(records)
    run.write(out_dir / "run_manifest.json")
    return run


def _vae_preview(out_dir: Path, dataset, every: int):
    if every <= 0:
        return None
    out_dir.mkdir(parents=True, exist_ok=True)
    sample = [dataset[i] for i in range(min(8, len(dataset)))]

    def hook(epoch, recons, kl, lr, model):
        _progress(f"epoch {epoch}: recons={recons:.4f} kl={kl:.4f} lr={lr:.3e}")
        if (epoch + 1) % every:
            return
        tops = [viz.sketch_image(a) for a in sample]
        recs = [viz.sketch_image(reconstruct_map(model, a)) for a in sample]
        model.train()  # reconstruct_map switches to eval; restore
        panel = viz.vstack_panels([viz.hstrip(tops), viz.hstrip(recs)])
        panel.save(out_dir / f"preview_epoch{epoch + 1:04d}.png", format="PNG")

    return hook


def cmd_train_vae(args) -> RunManifest:
    manifest_path = _require(args.dataset, "--dataset")
    out_path = Path(args.out)
    cfg = _resolve(VaeConfig, _load_config_file(args.config), {
        "alpha": args.alpha, "gamma_loss": args.gamma_loss,
        "latent_dim": args.latent_dim, "lr": args.lr,
        "lr_decay_gamma": args.lr_decay_gamma, "batch_size": args.batch_size,
        "epochs": args.epochs, "seed": args.seed,
        "image_size": args.image_size, "base_channels": args.base_channels,
        "standard_kl": args.standard_kl,
    })
    records, root = _records_for_split(manifest_path, "train")
    dataset = SketchArrayDataset(records, root)
    first = dataset[0]
    if first.shape[1] != cfg.image_size:
        raise InputError(
            f"dataset sketches are {first.shape[1]} px but image_size is "
            f"{cfg.image_size}; re-run prepare with --out-px {cfg.image_size}"
        )
    resume = None
    if args.resume:
        resume = VaeCheckpoint.load(_require(args.resume, "--resume"))
        stored = dataclasses.asdict(resume.config)
        wanted = dataclasses.asdict(cfg)
        diff = {k for k in wanted if k != "epochs" and wanted[k] != stored[k]}
        if diff:
            raise InputError(f"resume config mismatch on: {sorted(diff)}")
    preview = _vae_preview(out_path.parent / (out_path.stem + "_previews"),
                           dataset, args.preview_every)
    hook = preview or (lambda e, r, k, lr, m: _progress(
        f"epoch {e}: recons={r:.4f} kl={k:.4f} lr={lr:.3e}"))
    ckpt = train_vae(dataset, cfg, on_epoch=hook, resume=resume)
    ckpt.save(out_path)
    run = RunManifest(
        command="train-vae", config=dataclasses.asdict(cfg),
        inputs={"dataset": str(manifest_path), "resume": args.resume},
        seed=cfg.seed,
    )
    run.add_artifact(out_path)
    run.write(out_path.with_suffix(out_path.suffix + ".run.json"))
    return run


def cmd_train_gan(args) -> RunManifest:
    manifest_path = _require(args.dataset, "--dataset")
    out_path = Path(args.out)
    cfg = _resolve(GanConfig, _load_config_file(args.config), {
        "lr": args.lr, "beta1": args.beta1, "beta2": args.beta2,
        "batch_size": args.batch_size, "epochs": args.epochs,
        "lambda_l1": args.lambda_l1, "seed": args.seed,
        "image_size": args.image_size, "ngf": args.ngf, "ndf": args.ndf,
        "num_downs": args.num_downs,
    })
    source = args.source.replace("-", "_")
    vae_model: Optional[TopoVae] = None
    if source == "vae_reconstruction":
        vae_ckpt = VaeCheckpoint.load(_require(args.vae_ckpt, "--vae-ckpt"))
        vae_model = vae_ckpt.model
        if vae_model.image_size != cfg.image_size:
            raise InputError(
                f"stage-1 checkpoint is {vae_model.image_size} px but "
                f"image_size is {cfg.image_size}"
            )
    records, root = _records_for_split(manifest_path, "train")
    dataset = PairArrayDataset(records, root)
    first_topo, _ = dataset[0]
    if first_topo.shape[1] != cfg.image_size:
        raise InputError(
            f"dataset sketches are {first_topo.shape[1]} px but image_size is "
            f"{cfg.image_size}; re-run prepare with --out-px {cfg.image_size}"
        )
    resume = None
    if args.resume:
        resume = GanCheckpoint.load(_require(args.resume, "--resume"))
        stored = dataclasses.asdict(resume.config)
        wanted = dataclasses.asdict(cfg)
        diff = {k for k in wanted if k != "epochs" and wanted[k] != stored[k]}
        if diff:
            raise InputError(f"resume config mismatch on: {sorted(diff)}")

    preview_dir = out_path.parent / (out_path.stem + "_previews")
    sample = [dataset[i] for i in range(min(4, len(dataset)))]

    def hook(epoch, g_adv, g_l1, d, generator):
        _progress(f"epoch {epoch}: g_adv={g_adv:.4f} g_l1={g_l1:.4f} d={d:.4f}")
        if args.preview_every <= 0 or (epoch + 1) % args.preview_every:
            return
        preview_dir.mkdir(parents=True, exist_ok=True)
        tops = [viz.sketch_image(t) for t, _ in sample]
        gens = [viz.normalized_dem_hillshade(generate_patch(generator, t))
                for t, _ in sample]
        generator.train()
        panel = viz.vstack_panels([viz.hstrip(tops), viz.hstrip(gens)])
        panel.save(preview_dir / f"preview_epoch{epoch + 1:04d}.png", format="PNG")

    ckpt = train_cgan(dataset, cfg, source=source, vae=vae_model,
                      on_epoch=hook, resume=resume)
    ckpt.save(out_path)
    run = RunManifest(
        command="train-gan", config={**dataclasses.asdict(cfg), "source": source},
        inputs={"dataset": str(manifest_path), "vae_ckpt": args.vae_ckpt,
                "resume": args.resume},
        seed=cfg.seed,
    )
    run.add_artifact(out_path)
    run.write(out_path.with_suffix(out_path.suffix + ".run.json"))
    return run


def _load_stage2(args) -> tuple[GanCheckpoint, Optional[VaeCheckpoint]]:
    gan = GanCheckpoint.load(_require(args.gan_ckpt, "--gan-ckpt"))
    vae = None
    if getattr(args, "vae_ckpt", None):
        vae = VaeCheckpoint.load(_require(args.vae_ckpt, "--vae-ckpt"))
        if vae.model.image_size != gan.config.image_size:
            raise InputError("stage-1 and stage-2 checkpoints disagree on image size")
    return gan, vae


def cmd_generate(args) -> RunManifest:
    gan, vae = _load_stage2(args)
    if args.through_vae and vae is None:
        raise InputError("--through-vae requires --vae-ckpt")
    sketch_path = _require(args.sketch, "--sketch")
    topo = _load_sketch(sketch_path, gan.config.image_size)
    cond = reconstruct_map(vae.model, topo) if args.through_vae else topo
    values = generate_patch(gan.generator, cond)
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    run = RunManifest(
        command="generate",
        config={"through_vae": bool(args.through_vae)},
        inputs={"sketch": str(sketch_path), "gan_ckpt": args.gan_ckpt,
                "vae_ckpt": args.vae_ckpt},
    )
    _write_dem_outputs(values, out_path, run)
    run.write(out_path.with_suffix(out_path.suffix + ".run.json"))
    return run


def cmd_interpolate(args) -> RunManifest:
    gan, vae = _load_stage2(args)
    if vae is None:
        raise InputError("interpolation requires --vae-ckpt")
    size = gan.config.image_size
    topo_a = _load_sketch(_require(args.sketch_a, "--sketch-a"), size)
    topo_b = _load_sketch(_require(args.sketch_b, "--sketch-b"), size)
    try:
        gammas = tuple(float(g) for g in args.gammas.split(","))
        req = InterpolationRequest(topo_a=topo_a, topo_b=topo_b, gammas=gammas)
    except ValueError as exc:
        raise InputError(f"bad --gammas: {exc}") from exc
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    run = RunManifest(
        command="interpolate", config={"gammas": list(req.gammas)},
        inputs={"sketch_a": args.sketch_a, "sketch_b": args.sketch_b,
                "gan_ckpt": args.gan_ckpt, "vae_ckpt": args.vae_ckpt},
    )
    maps = interpolate_terrains(req, vae.model)
    shades = []
    for i, (g, rec) in enumerate(zip(req.gammas, maps)):
        values = generate_patch(gan.generator, rec)
        _write_dem_outputs(values, out_dir / f"interp_{i:02d}_gamma{g:.3f}.png", run)
        shades.append(viz.normalized_dem_hillshade(values))
    strip_path = out_dir / "interp_strip.png"
    viz.hstrip(shades).save(strip_path, format="PNG")
    run.add_artifact(strip_path)
    run.write(out_dir / "run_manifest.json")
    return run


def cmd_variants(args) -> RunManifest:
    gan, vae = _load_stage2(args)
    if vae is None:
        raise InputError("variant sampling requires --vae-ckpt")
    topo = _load_sketch(_require(args.sketch, "--sketch"), gan.config.image_size)
    try:
        req = VariantRequest(topo=topo, n_variants=args.n,
                             eps_scale=args.eps_scale, seed=args.seed)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    run = RunManifest(
        command="variants",
        config={"n": req.n_variants, "eps_scale": req.eps_scale},
        inputs={"sketch": args.sketch, "gan_ckpt": args.gan_ckpt,
                "vae_ckpt": args.vae_ckpt},
        seed=req.seed,
    )
    for i, rec in enumerate(sample_variants(req, vae.model)):
        values = generate_patch(gan.generator, rec)
        _write_dem_outputs(values, out_dir / f"variant_{i:02d}.png", run)
    run.write(out_dir / "run_manifest.json")
    return run


def cmd_eval(args) -> RunManifest:
    gan, vae = _load_stage2(args)
    manifest_path = _require(args.dataset, "--dataset")
    records, root = _records_for_split(manifest_path, args.split)
    pairs = [load_pair(r, root) for r in records]
    report = evaluate_checkpoint(pairs, gan, vae.model if vae else None)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "per_patch_mse.csv"
    csv_path.write_text(
        "pair_id,mse_m2\n"
        + "".join(f"{r.pair_id},{m!r}\n" for r, m in zip(records, report.per_patch_mse))
    )
    summary_path = out_dir / "summary.json"
    summary_path.write_text(json.dumps(
        {"mean_mse": report.mean_mse, "n_patches": report.n_patches},
        sort_keys=True, indent=2) + "\n")
    _progress(f"mean MSE over {report.n_patches} patches: {report.mean_mse:.6g} m^2")
    run = RunManifest(
        command="eval", config={"split": args.split},
        inputs={"dataset": str(manifest_path), "gan_ckpt": args.gan_ckpt,
                "vae_ckpt": args.vae_ckpt},
    )
    run.add_artifact(csv_path)
    run.add_artifact(summary_path)
    run.write(out_dir / "run_manifest.json")
    return run


def cmd_serve(args) -> RunManifest:
    import uvicorn

    from .service import create_app

    app = create_app(
        vae_ckpt=_require(args.vae_ckpt, "--vae-ckpt"),
        gan_ckpt=_require(args.gan_ckpt, "--gan-ckpt"),
        timeout_ms=args.timeout_ms,
    )
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return RunManifest(command="serve", config={}, inputs={})


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="terrasketch",
        description="Sketch-driven terrain authoring pipeline.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="tile DEMs, extract sketches, write a paired dataset")
    p.add_argument("--dem-dir", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--train-n", type=int)
    p.add_argument("--test-n", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--patch-px", type=int)
    p.add_argument("--stride-px", type=int)
    p.add_argument("--out-px", type=int)
    p.add_argument("--n-levels", type=int)
    p.add_argument("--line-px", type=int)
    p.add_argument("--blur-sigma-px", type=float)
    p.add_argument("--tau-quantile", type=float)
    p.add_argument("--config")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train-vae", help="train the stage-1 sketch autoencoder")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--alpha", type=float)
    p.add_argument("--gamma-loss", type=float)
    p.add_argument("--latent-dim", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--lr-decay-gamma", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--image-size", type=int)
    p.add_argument("--base-channels", type=int)
    p.add_argument("--standard-kl", action="store_const", const=True)
    p.add_argument("--preview-every", type=int, default=0)
    p.add_argument("--resume")
    p.add_argument("--config")
    p.set_defaults(func=cmd_train_vae)

    p = sub.add_parser("train-gan", help="train the stage-2 sketch-to-DEM translator")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--source", default="vae-reconstruction",
                   choices=["ground-truth-sketch", "vae-reconstruction"])
    p.add_argument("--vae-ckpt")
    p.add_argument("--lr", type=float)
    p.add_argument("--beta1", type=float)
    p.add_argument("--beta2", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lambda-l1", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--image-size", type=int)
    p.add_argument("--ngf", type=int)
    p.add_argument("--ndf", type=int)
    p.add_argument("--num-downs", type=int)
    p.add_argument("--preview-every", type=int, default=0)
    p.add_argument("--resume")
    p.add_argument("--config")
    p.set_defaults(func=cmd_train_gan)

    p = sub.add_parser("generate", help="render one sketch into a DEM")
    p.add_argument("--sketch", required=True)
    p.add_argument("--gan-ckpt", required=True)
    p.add_argument("--vae-ckpt")
    p.add_argument("--through-vae", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("interpolate", help="blend two sketches across latent codes")
    p.add_argument("--sketch-a", required=True)
    p.add_argument("--sketch-b", required=True)
    p.add_argument("--gammas", default=",".join(str(g) for g in DEFAULT_INTERPOLATION_GAMMAS))
    p.add_argument("--vae-ckpt", required=True)
    p.add_argument("--gan-ckpt", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_interpolate)

    p = sub.add_parser("variants", help="sample terrain variants around one sketch")
    p.add_argument("--sketch", required=True)
    p.add_argument("--n", type=int, default=4)
    p.add_argument("--eps-scale", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--vae-ckpt", required=True)
    p.add_argument("--gan-ckpt", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_variants)

    p = sub.add_parser("eval", help="score a trained stage-2 model on a dataset split")
    p.add_argument("--dataset", required=True)
    p.add_argument("--gan-ckpt", required=True)
    p.add_argument("--vae-ckpt")
    p.add_argument("--split", default="test", choices=["train", "test"])
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="run the local inference HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--vae-ckpt", required=True)
    p.add_argument("--gan-ckpt", required=True)
    p.add_argument("--timeout-ms", type=int, default=30000)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code not in (0, None) else EXIT_OK
    try:
        args.func(args)
        return EXIT_OK
    except (InputError, FileNotFoundError, DemFormatError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except TrainingDivergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - single catch-all for exit code 3
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

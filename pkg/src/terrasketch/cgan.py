"""Stage 2: conditional sketch-to-elevation translation.

The generator is a U-Net (stride-2 encoder/decoder with skip connections,
tanh output wrapped back to [0, 1]); the discriminator is a 70x70-receptive-
field patch classifier over the channel-concatenated (sketch, elevation) pair.
Training alternates one discriminator and one generator step per batch, with
the generator driven by a non-saturating adversarial term plus lambda_l1 *
mean-absolute reconstruction error.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .checkpoint import read_archive, write_archive
from .dem import DemGrid, EvalReport, NormalizedPatch
from .sketch import TopoMap
from .vae import TopoVae, TrainingDivergedError, _init_weights

__all__ = [
    "GanConfig",
    "GeneratorFeatures",
    "Pix2PixGenerator",
    "PatchDiscriminator",
    "GanCheckpoint",
    "gan_value_terms",
    "l1_loss",
    "train_cgan",
    "evaluate_pairs",
    "evaluate_checkpoint",
    "FULL_SCALE_REFERENCE_MSE_M2",
]

# Mean squared error (meters^2) of the full-scale run of this pipeline:
# 3000 training and 878 test patches cut from the Pyrenees/Tyrol mountain
# DEM corpora at 2 m/pixel. Desk-scale runs train on a handful of synthetic
# patches and must not be compared against this number.
FULL_SCALE_REFERENCE_MSE_M2 = 28.4024


@dataclass
class GanConfig:
    """Stage-2 hyperparameters; Adam settings follow the reference recipe."""

    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    batch_size: int = 32
    epochs: int = 200
    lambda_l1: float = 100.0
    seed: int = 0
    image_size: int = 256
    ngf: int = 64
    ndf: int = 64
    num_downs: int = 8
    saturating_g_loss: bool = False

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be > 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("beta1/beta2 must be in [0, 1)")
        if self.lambda_l1 < 0:
            raise ValueError("lambda_l1 must be >= 0")
        if self.image_size % (2 ** self.num_downs) != 0:
            raise ValueError(
                f"image_size {self.image_size} not divisible by 2**{self.num_downs}"
            )


@dataclass(frozen=True)
class GeneratorFeatures:
    """Bottleneck embedding of the generator encoder for one batch."""

    f: torch.Tensor

    def __post_init__(self):
        if not torch.isfinite(self.f).all():
            raise ValueError("non-finite generator features")


def _down_channels(ngf: int, num_downs: int) -> list[int]:
    return [ngf * min(2 ** i, 8) for i in range(num_downs)]


class Pix2PixGenerator(nn.Module):
    """U-Net translator from a 3-channel sketch to a 1-channel elevation patch.

    num_downs stride-2 encoder steps take N x N input to a 1 x 1 bottleneck
    when N = 2**num_downs; the mirrored decoder concatenates skip features.
    Inputs and outputs use [0, 1]; internally the net works in [-1, 1] and
    ends in tanh.
    """

    def __init__(self, in_channels: int = 3, out_channels: int = 1,
                 num_downs: int = 8, ngf: int = 64, dropout_blocks: int = 3):
        super().__init__()
        if num_downs < 2:
            raise ValueError("num_downs must be >= 2")
        self.num_downs = num_downs
        self.ngf = ngf
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.dropout_blocks = min(dropout_blocks, num_downs - 1)

        chans = _down_channels(ngf, num_downs)
        downs = [nn.Sequential(nn.Conv2d(in_channels, chans[0], 4, 2, 1))]
        for i in range(1, num_downs):
            layers: list[nn.Module] = [
                nn.LeakyReLU(0.2, inplace=True),
                nn.Conv2d(chans[i - 1], chans[i], 4, 2, 1),
            ]
            if i < num_downs - 1:  # innermost block stays norm-free
                layers.append(nn.BatchNorm2d(chans[i]))
            downs.append(nn.Sequential(*layers))
        self.downs = nn.ModuleList(downs)

        ups = []
        for i in range(num_downs):
            k = num_downs - 1 - i  # index of the down block this up undoes
            in_ch = chans[k] if i == 0 else chans[k] * 2  # skip concat doubles input
            out_ch = chans[k - 1] if k > 0 else out_channels
            layers = [
                nn.ReLU(inplace=True),
                nn.ConvTranspose2d(in_ch, out_ch, 4, 2, 1),
            ]
            if k > 0:
                layers.append(nn.BatchNorm2d(out_ch))
                if i < self.dropout_blocks:
                    layers.append(nn.Dropout(0.5))
            else:
                layers.append(nn.Tanh())
            ups.append(nn.Sequential(*layers))
        self.ups = nn.ModuleList(ups)

        self.apply(_init_weights)

    def _check_input(self, x: torch.Tensor) -> None:
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ValueError(f"expected (B, {self.in_channels}, N, N), got {tuple(x.shape)}")
        n = x.shape[2]
        if x.shape[3] != n or n % (2 ** self.num_downs) != 0 or n < 2 ** self.num_downs:
            raise ValueError(
                f"spatial size {tuple(x.shape[2:])} not a square multiple of "
                f"2**{self.num_downs}"
            )

    def forward(self, x: torch.Tensor, return_features: bool = False):
        """Translate [0, 1] sketches to [0, 1] elevation values."""
        self._check_input(x)
        h = x * 2.0 - 1.0
        skips = []
        for down in self.downs:
            h = down(h)
            skips.append(h)
        features = skips[-1]
        h = features
        for i, up in enumerate(self.ups):
            h = up(h)
            if i < self.num_downs - 1:
                h = torch.cat([h, skips[self.num_downs - 2 - i]], dim=1)
        out = (h + 1.0) / 2.0
        if return_features:
            return out, GeneratorFeatures(f=features.detach())
        return out

    @torch.no_grad()
    def bottleneck(self, x: torch.Tensor) -> torch.Tensor:
        """Encoder bottleneck feature map (the embedding fed to the decoder)."""
        self._check_input(x)
        h = x * 2.0 - 1.0
        for down in self.downs:
            h = down(h)
        return h


class PatchDiscriminator(nn.Module):
    """Patch classifier over channel-concatenated (sketch, elevation) pairs.

    With the default three stride-2 stages plus two stride-1 4x4 convolutions,
    each output logit covers a 70 x 70 receptive field and a 256 x 256 input
    yields a 30 x 30 logit map. n_stride2 shrinks the stack for tiny probe
    inputs.
    """

    def __init__(self, sketch_channels: int = 3, dem_channels: int = 1,
                 ndf: int = 64, n_stride2: int = 3):
        super().__init__()
        if n_stride2 < 1:
            raise ValueError("n_stride2 must be >= 1")
        layers: list[nn.Module] = [
            nn.Conv2d(sketch_channels + dem_channels, ndf, 4, 2, 1),
            nn.LeakyReLU(0.2, inplace=True),
        ]
        ch = ndf
        for _ in range(n_stride2 - 1):
            layers += [
                nn.Conv2d(ch, ch * 2, 4, 2, 1),
                nn.BatchNorm2d(ch * 2),
                nn.LeakyReLU(0.2, inplace=True),
            ]
            ch *= 2
        layers += [
            nn.Conv2d(ch, ch * 2, 4, 1, 1),
            nn.BatchNorm2d(ch * 2),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(ch * 2, 1, 4, 1, 1),
        ]
        self.net = nn.Sequential(*layers)
        self.apply(_init_weights)

    def forward(self, sketch: torch.Tensor, dem: torch.Tensor) -> torch.Tensor:
        """Logit map for a [0, 1] sketch conditioned on a [0, 1] elevation patch."""
        if sketch.shape[0] != dem.shape[0] or sketch.shape[2:] != dem.shape[2:]:
            raise ValueError(
                f"sketch/dem shape mismatch: {tuple(sketch.shape)} vs {tuple(dem.shape)}"
            )
        pair = torch.cat([sketch * 2.0 - 1.0, dem * 2.0 - 1.0], dim=1)
        return self.net(pair)


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------


def _generator_adv(d_fake_logits: torch.Tensor, saturating: bool) -> torch.Tensor:
    if saturating:
        return F.logsigmoid(-d_fake_logits).mean()
    return -F.logsigmoid(d_fake_logits).mean()


def gan_value_terms(d_real_logits: torch.Tensor, d_fake_logits: torch.Tensor,
                    saturating: bool = False) -> tuple[torch.Tensor, torch.Tensor]:
    """Discriminator and generator adversarial terms from patch logit maps.

    d_loss = -1/2 (E[log sigma(real)] + E[log(1 - sigma(fake))]); the default
    generator term is the non-saturating -E[log sigma(fake)]. Both use
    log-sigmoid forms that stay finite for any finite logit. saturating=True
    selects the literal E[log(1 - sigma(fake))] minimization instead.
    """
    d_loss = -0.5 * (
        F.logsigmoid(d_real_logits).mean() + F.logsigmoid(-d_fake_logits).mean()
    )
    return d_loss, _generator_adv(d_fake_logits, saturating)


def l1_loss(d_gen: torch.Tensor, d_gt: torch.Tensor) -> torch.Tensor:
    """Mean absolute difference between generated and target patches."""
    if d_gen.shape != d_gt.shape:
        raise ValueError(f"shape mismatch: {tuple(d_gen.shape)} vs {tuple(d_gt.shape)}")
    return (d_gen - d_gt).abs().mean()


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


@dataclass
class GanCheckpoint:
    """Trained stage-2 pair with config and per-epoch (g_adv, g_l1, d) trace."""

    generator: Pix2PixGenerator
    discriminator: PatchDiscriminator
    config: GanConfig
    epoch: int
    loss_trace: list[tuple[int, float, float, float]] = field(default_factory=list)

    def save(self, path: str | Path) -> None:
        arch = {
            "in_channels": self.generator.in_channels,
            "out_channels": self.generator.out_channels,
            "num_downs": self.generator.num_downs,
            "ngf": self.generator.ngf,
            "ndf": self.discriminator.net[0].out_channels,
        }
        write_archive(
            path,
            kind="gan",
            config={"train": asdict(self.config), "arch": arch},
            state_dicts={
                "generator": self.generator.state_dict(),
                "discriminator": self.discriminator.state_dict(),
            },
            epoch=self.epoch,
            trace_header=("epoch", "g_adv", "g_l1", "d"),
            trace_rows=[(e, repr(a), repr(l), repr(d)) for e, a, l, d in self.loss_trace],
        )

    @classmethod
    def load(cls, path: str | Path) -> "GanCheckpoint":
        data = read_archive(path, expected_kind="gan")
        cfg = GanConfig(**data["config"]["train"])
        arch = data["config"]["arch"]
        gen = Pix2PixGenerator(
            in_channels=arch["in_channels"], out_channels=arch["out_channels"],
            num_downs=arch["num_downs"], ngf=arch["ngf"],
        )
        disc = PatchDiscriminator(ndf=arch["ndf"])
        gen.load_state_dict(data["state_dicts"]["generator"])
        disc.load_state_dict(data["state_dicts"]["discriminator"])
        gen.eval()
        disc.eval()
        trace = [
            (int(e), float(a), float(l), float(d))
            for e, a, l, d in data["trace_rows"]
        ]
        return cls(generator=gen, discriminator=disc, config=cfg,
                   epoch=data["epoch"], loss_trace=trace)


def _conditioning_fn(source: str, vae: Optional[TopoVae]) -> Callable[[torch.Tensor], torch.Tensor]:
    if source == "ground_truth_sketch":
        return lambda x: x
    if source == "vae_reconstruction":
        if vae is None:
            raise ValueError("source='vae_reconstruction' requires a stage-1 model")
        vae.eval()
        for p in vae.parameters():  # stage-1 stays frozen during stage-2 training
            p.requires_grad_(False)

        @torch.no_grad()
        def recon(x: torch.Tensor) -> torch.Tensor:
            mu, _ = vae.encode(x)
            return vae.decode(mu)

        return recon
    raise ValueError(f"unknown conditioning source: {source!r}")


def train_cgan(dataset, cfg: GanConfig, source: str = "vae_reconstruction",
               vae: Optional[TopoVae] = None,
               on_epoch: Optional[Callable[..., None]] = None,
               resume: Optional["GanCheckpoint"] = None,
               ) -> GanCheckpoint:
    """Train the stage-2 pair on (sketch, normalized DEM) examples.

    dataset is any indexable of ((3, H, W), (H, W)) float arrays in [0, 1].
    source selects the generator conditioning: the stored ground-truth
    sketches, or their frozen stage-1 mean reconstructions (the full-pipeline
    wiring). One discriminator step and one generator step run per batch.
    on_epoch, if given, receives (epoch, g_adv, g_l1, d, generator) after each
    epoch; resume continues a checkpoint's weights with a fresh optimizer.
    """
    n = len(dataset)
    if n == 0:
        raise ValueError("empty dataset")
    torch.manual_seed(cfg.seed)
    start_epoch = 0
    trace: list[tuple[int, float, float, float]] = []
    if resume is None:
        gen = Pix2PixGenerator(num_downs=cfg.num_downs, ngf=cfg.ngf)
        disc = PatchDiscriminator(ndf=cfg.ndf)
    else:
        gen, disc = resume.generator, resume.discriminator
        start_epoch = resume.epoch
        trace = list(resume.loss_trace)
        if start_epoch >= cfg.epochs:
            raise ValueError(
                f"resume checkpoint already at epoch {start_epoch} >= {cfg.epochs}"
            )
    condition = _conditioning_fn(source, vae)
    opt_g = torch.optim.Adam(gen.parameters(), lr=cfg.lr, betas=(cfg.beta1, cfg.beta2))
    opt_d = torch.optim.Adam(disc.parameters(), lr=cfg.lr, betas=(cfg.beta1, cfg.beta2))
    shuffle_rng = np.random.default_rng(cfg.seed + start_epoch)

    gen.train()
    disc.train()
    for epoch in range(start_epoch, cfg.epochs):
        perm = shuffle_rng.permutation(n)
        batches = [perm[s : s + cfg.batch_size] for s in range(0, n, cfg.batch_size)]
        sums = np.zeros(3)
        for batch_idx in batches:
            items = [dataset[int(i)] for i in batch_idx]
            sketch = torch.from_numpy(np.stack([t for t, _ in items])).float()
            real = torch.from_numpy(np.stack([d for _, d in items])).float()[:, None]
            cond = condition(sketch)

            fake = gen(cond)
            d_loss, _ = gan_value_terms(disc(cond, real), disc(cond, fake.detach()))
            opt_d.zero_grad()
            d_loss.backward()
            opt_d.step()

            g_adv = _generator_adv(disc(cond, fake), cfg.saturating_g_loss)
            g_l1 = l1_loss(fake, real)
            g_total = g_adv + cfg.lambda_l1 * g_l1
            if not (torch.isfinite(g_total) and torch.isfinite(d_loss)):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}: d={d_loss.item():.6g}, "
                    f"g_adv={g_adv.item():.6g}, l1={g_l1.item():.6g}"
                )
            opt_g.zero_grad()
            g_total.backward()
            opt_g.step()
            sums += (g_adv.item(), g_l1.item(), d_loss.item())
        means = sums / len(batches)
        trace.append((epoch, *means.tolist()))
        if on_epoch is not None:
            on_epoch(epoch, *means.tolist(), gen)
    gen.eval()
    disc.eval()
    return GanCheckpoint(generator=gen, discriminator=disc, config=cfg,
                         epoch=cfg.epochs, loss_trace=trace)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


@torch.no_grad()
def generate_patch(gen: Pix2PixGenerator, sketch: TopoMap | np.ndarray) -> np.ndarray:
    """Run one sketch through the generator; returns (H, W) values in [0, 1]."""
    gen.eval()
    arr = sketch.to_array() if isinstance(sketch, TopoMap) else np.asarray(sketch, np.float32)
    x = torch.from_numpy(arr).float()[None]
    return gen(x)[0, 0].clamp(0.0, 1.0).numpy()


def evaluate_pairs(pairs: Sequence[tuple[TopoMap | np.ndarray, NormalizedPatch]],
                   generate_fn: Callable[[TopoMap | np.ndarray], np.ndarray],
                   pixel_size_m: float = 2.0) -> EvalReport:
    """Score a generator callable against ground-truth patches, in meters^2.

    Generated [0, 1] values are mapped to meters with the matching patch's
    stored (h_min, h_max) before the squared error is taken, so the score is
    comparable across patches regardless of their local relief.
    """
    per_patch = []
    for sketch, gt in pairs:
        gen01 = np.clip(np.asarray(generate_fn(sketch), dtype=np.float64), 0.0, 1.0)
        gen_m = gen01 * (gt.h_max - gt.h_min) + gt.h_min
        gt_m = gt.values * (gt.h_max - gt.h_min) + gt.h_min
        if gen_m.shape != gt_m.shape:
            raise ValueError(f"shape mismatch: {gen_m.shape} vs {gt_m.shape}")
        per_patch.append(float(np.mean((gen_m - gt_m) ** 2)))
    return EvalReport(per_patch_mse=per_patch)


def evaluate_checkpoint(pairs: Sequence[tuple[TopoMap, NormalizedPatch]],
                        gan: GanCheckpoint,
                        vae: Optional[TopoVae] = None) -> EvalReport:
    """Evaluate a trained generator, optionally conditioning on stage-1 reconstructions."""
    from .vae import reconstruct_map

    def run(sketch: TopoMap | np.ndarray) -> np.ndarray:
        cond = reconstruct_map(vae, sketch) if vae is not None else sketch
        return generate_patch(gan.generator, cond)

    return evaluate_pairs(pairs, run)

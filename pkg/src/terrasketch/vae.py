"""Stage 1: convolutional VAE over topographic sketches.

The encoder is a stack of stride-2 3x3 convolutions with batch norm and leaky
ReLU, doubling channels each layer; two fully-connected heads emit the mean
and log-variance of a 128-d latent code. The decoder mirrors it with stride-2
transposed convolutions and ends in a 3-channel sigmoid output.

The reconstruction loss is per-channel binary cross entropy with the ridge and
valley channels up-weighted by alpha; the latent regularizer is implemented
verbatim as sum(sigma^2 + mu^2 - log sigma^2) over latent dimensions (no 1/2
factor and no -1 offset; the offset has zero gradient and the factor folds
into the gamma_loss weight). A standard_kl flag switches to the textbook
closed form for experimentation.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
import torch
from torch import nn

from .checkpoint import read_archive, write_archive
from .sketch import TopoMap

__all__ = [
    "VaeConfig",
    "LatentCode",
    "TopoVae",
    "VaeCheckpoint",
    "TrainingDivergedError",
    "bce",
    "recons_loss",
    "kl_loss",
    "reparameterize",
    "vae_loss",
    "train_vae",
    "encode_map",
    "decode_code",
]

BCE_CLAMP = 1e-7
LOGVAR_CLAMP = 10.0
LEAKY_SLOPE = 0.2


class TrainingDivergedError(RuntimeError):
    """Raised when a training loss becomes non-finite."""


@dataclass
class VaeConfig:
    """Stage-1 hyperparameters; defaults follow the reference training recipe."""

    alpha: float = 5.0          # weight of ridge/valley channel losses
    gamma_loss: float = 0.65    # weight of the latent regularizer
    latent_dim: int = 128
    lr: float = 1e-3
    lr_decay_gamma: float = 0.95
    batch_size: int = 64
    epochs: int = 100
    seed: int = 0
    image_size: int = 256
    base_channels: int = 32
    standard_kl: bool = False

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be > 0")
        if self.gamma_loss < 0:
            raise ValueError("gamma_loss must be >= 0")
        if self.lr <= 0:
            raise ValueError("lr must be > 0")
        if self.latent_dim < 1 or self.batch_size < 1 or self.epochs < 0:
            raise ValueError("latent_dim/batch_size must be >= 1, epochs >= 0")


@dataclass(frozen=True)
class LatentCode:
    """Latent posterior parameters and a sampled code for one sketch."""

    mu: np.ndarray
    logvar: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        for name in ("mu", "logvar", "z"):
            v = np.asarray(getattr(self, name), dtype=np.float64)
            if v.ndim != 1 or not np.all(np.isfinite(v)):
                raise ValueError(f"{name} must be a finite 1D vector")
            object.__setattr__(self, name, v)
        if not (self.mu.shape == self.logvar.shape == self.z.shape):
            raise ValueError("mu/logvar/z length mismatch")

    @property
    def sigma(self) -> np.ndarray:
        return np.exp(0.5 * np.clip(self.logvar, -LOGVAR_CLAMP, LOGVAR_CLAMP))


def _init_weights(module: nn.Module) -> None:
    # image-translation convention: normal(0, 0.02) conv/linear, BN ~ N(1, 0.02)
    if isinstance(module, (nn.Conv2d, nn.ConvTranspose2d, nn.Linear)):
        nn.init.normal_(module.weight, 0.0, 0.02)
        if module.bias is not None:
            nn.init.zeros_(module.bias)
    elif isinstance(module, nn.BatchNorm2d):
        nn.init.normal_(module.weight, 1.0, 0.02)
        nn.init.zeros_(module.bias)


class TopoVae(nn.Module):
    """Encoder/decoder pair over 3-channel sketch rasters.

    n_layers stride-2 stages halve the resolution each step, so image_size
    must be divisible by 2**n_layers.
    """

    def __init__(self, image_size: int = 256, latent_dim: int = 128,
                 base_channels: int = 32, n_layers: int = 6, in_channels: int = 3):
        super().__init__()
        if image_size % (2 ** n_layers) != 0:
            raise ValueError(
                f"image_size {image_size} not divisible by 2**{n_layers}"
            )
        self.image_size = image_size
        self.latent_dim = latent_dim
        self.base_channels = base_channels
        self.n_layers = n_layers
        self.in_channels = in_channels

        chans = [base_channels * 2 ** i for i in range(n_layers)]
        self.final_spatial = image_size // 2 ** n_layers
        flat = chans[-1] * self.final_spatial ** 2

        enc = []
        prev = in_channels
        for ch in chans:
            enc.append(
                nn.Sequential(
                    nn.Conv2d(prev, ch, kernel_size=3, stride=2, padding=1),
                    nn.BatchNorm2d(ch),
                    nn.LeakyReLU(LEAKY_SLOPE, inplace=True),
                )
            )
            prev = ch
        self.encoder_blocks = nn.ModuleList(enc)
        self.fc_mu = nn.Linear(flat, latent_dim)
        self.fc_logvar = nn.Linear(flat, latent_dim)

        self.fc_decode = nn.Linear(latent_dim, flat)
        dec_out = chans[-2::-1] + [chans[0]]
        dec = []
        prev = chans[-1]
        for ch in dec_out:
            dec.append(
                nn.Sequential(
                    nn.ConvTranspose2d(prev, ch, kernel_size=3, stride=2,
                                       padding=1, output_padding=1),
                    nn.BatchNorm2d(ch),
                    nn.LeakyReLU(LEAKY_SLOPE, inplace=True),
                )
            )
            prev = ch
        self.decoder_blocks = nn.ModuleList(dec)
        self.final_conv = nn.Conv2d(prev, in_channels, kernel_size=3, stride=1, padding=1)

        self.apply(_init_weights)

    def arch_params(self) -> dict:
        return {
            "image_size": self.image_size,
            "latent_dim": self.latent_dim,
            "base_channels": self.base_channels,
            "n_layers": self.n_layers,
            "in_channels": self.in_channels,
        }

    def encode(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Map (B, C, H, W) sketches to (mu, logvar), each (B, latent_dim)."""
        if x.ndim != 4 or x.shape[1] != self.in_channels or \
                x.shape[2] != self.image_size or x.shape[3] != self.image_size:
            raise ValueError(
                f"expected (B, {self.in_channels}, {self.image_size}, "
                f"{self.image_size}), got {tuple(x.shape)}"
            )
        h = x
        for block in self.encoder_blocks:
            h = block(h)
        h = h.flatten(1)
        mu = self.fc_mu(h)
        logvar = torch.clamp(self.fc_logvar(h), -LOGVAR_CLAMP, LOGVAR_CLAMP)
        return mu, logvar

    def encoder_feature_shapes(self, x: torch.Tensor) -> list[tuple[int, ...]]:
        """Spatial trace of the encoder (shape after each stride-2 block)."""
        shapes = []
        h = x
        for block in self.encoder_blocks:
            h = block(h)
            shapes.append(tuple(h.shape[1:]))
        return shapes

    def decode(self, z: torch.Tensor) -> torch.Tensor:
        """Map (B, latent_dim) codes to (B, C, H, W) sketches in (0, 1)."""
        if z.ndim != 2 or z.shape[1] != self.latent_dim:
            raise ValueError(f"expected (B, {self.latent_dim}) codes, got {tuple(z.shape)}")
        h = self.fc_decode(z)
        c0 = self.encoder_blocks[-1][0].out_channels
        h = h.view(z.shape[0], c0, self.final_spatial, self.final_spatial)
        for block in self.decoder_blocks:
            h = block(h)
        return torch.sigmoid(self.final_conv(h))

    def decoder_feature_shapes(self, z: torch.Tensor) -> list[tuple[int, ...]]:
        """Spatial trace of the decoder (shape after each upsampling block)."""
        h = self.fc_decode(z)
        c0 = self.encoder_blocks[-1][0].out_channels
        h = h.view(z.shape[0], c0, self.final_spatial, self.final_spatial)
        shapes = []
        for block in self.decoder_blocks:
            h = block(h)
            shapes.append(tuple(h.shape[1:]))
        return shapes

    def forward(self, x: torch.Tensor, eps: Optional[torch.Tensor] = None):
        mu, logvar = self.encode(x)
        if eps is None:
            eps = torch.randn_like(mu)
        z = reparameterize(mu, logvar, eps)
        return self.decode(z), mu, logvar


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------


def bce(t_inp: torch.Tensor, t_rec: torch.Tensor) -> torch.Tensor:
    """Pixel-averaged binary cross entropy with the prediction clamped away from {0, 1}."""
    r = torch.clamp(t_rec, BCE_CLAMP, 1.0 - BCE_CLAMP)
    return -(t_inp * torch.log(r) + (1.0 - t_inp) * torch.log(1.0 - r)).mean()


def recons_loss(t_inp: torch.Tensor, t_rec: torch.Tensor, alpha: float) -> torch.Tensor:
    """Channel-weighted reconstruction loss.

    Level-set (green) BCE enters with weight 1; the sparse ridge (red) and
    valley (blue) channels are up-weighted by alpha.
    """
    if t_inp.shape != t_rec.shape:
        raise ValueError(f"shape mismatch: {tuple(t_inp.shape)} vs {tuple(t_rec.shape)}")
    if t_inp.ndim == 3:
        t_inp, t_rec = t_inp[None], t_rec[None]
    red, green, blue = (bce(t_inp[:, k], t_rec[:, k]) for k in range(3))
    return green + alpha * (red + blue)


def kl_loss(mu: torch.Tensor, logvar: torch.Tensor, standard: bool = False) -> torch.Tensor:
    """Latent regularizer, summed over dimensions and averaged over the batch.

    Default form: sum(sigma^2 + mu^2 - log sigma^2). With standard=True the
    textbook 0.5 * sum(sigma^2 + mu^2 - log sigma^2 - 1) is used instead.
    """
    if mu.ndim == 1:
        mu, logvar = mu[None], logvar[None]
    sigma2 = torch.exp(logvar)
    per_dim = sigma2 + mu * mu - logvar
    if standard:
        per_dim = 0.5 * (per_dim - 1.0)
    return per_dim.sum(dim=1).mean()


def reparameterize(mu: torch.Tensor, logvar: torch.Tensor,
                   eps: torch.Tensor) -> torch.Tensor:
    """z = mu + exp(logvar / 2) * eps, differentiable in mu and logvar."""
    return mu + torch.exp(0.5 * logvar) * eps


def vae_loss(t_inp: torch.Tensor, t_rec: torch.Tensor, mu: torch.Tensor,
             logvar: torch.Tensor, cfg: VaeConfig) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Composite loss: reconstruction + gamma_loss * latent regularizer.

    Returns (total, reconstruction term, latent term).
    """
    rec = recons_loss(t_inp, t_rec, cfg.alpha)
    kl = kl_loss(mu, logvar, standard=cfg.standard_kl)
    return rec + cfg.gamma_loss * kl, rec, kl


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


@dataclass
class VaeCheckpoint:
    """Trained stage-1 model with its config and per-epoch loss trace."""

    model: TopoVae
    config: VaeConfig
    epoch: int
    loss_trace: list[tuple[int, float, float]] = field(default_factory=list)

    def save(self, path: str | Path) -> None:
        write_archive(
            path,
            kind="vae",
            config={"train": asdict(self.config), "arch": self.model.arch_params()},
            state_dicts={"model": self.model.state_dict()},
            epoch=self.epoch,
            trace_header=("epoch", "recons", "kl"),
            trace_rows=[(e, repr(r), repr(k)) for e, r, k in self.loss_trace],
        )

    @classmethod
    def load(cls, path: str | Path) -> "VaeCheckpoint":
        data = read_archive(path, expected_kind="vae")
        cfg = VaeConfig(**data["config"]["train"])
        model = TopoVae(**data["config"]["arch"])
        model.load_state_dict(data["state_dicts"]["model"])
        model.eval()
        trace = [(int(e), float(r), float(k)) for e, r, k in data["trace_rows"]]
        return cls(model=model, config=cfg, epoch=data["epoch"], loss_trace=trace)


def _as_batch(dataset, indices: np.ndarray) -> torch.Tensor:
    return torch.from_numpy(np.stack([dataset[int(i)] for i in indices])).float()


def train_vae(dataset, cfg: VaeConfig,
              on_epoch: Optional[Callable[..., None]] = None,
              resume: Optional["VaeCheckpoint"] = None,
              ) -> VaeCheckpoint:
    """Train the stage-1 model.

    dataset is any indexable of (3, H, W) float arrays in [0, 1]. Batching
    order is a per-epoch seeded shuffle; the learning rate decays by
    lr_decay_gamma after every epoch. on_epoch, if given, receives
    (epoch, recons, kl, lr, model) after each epoch. Passing resume continues
    training that checkpoint's weights from its stored epoch (with a fresh
    optimizer). Raises TrainingDivergedError if a loss turns non-finite.
    """
    n = len(dataset)
    if n == 0:
        raise ValueError("empty dataset")
    torch.manual_seed(cfg.seed)
    start_epoch = 0
    trace: list[tuple[int, float, float]] = []
    if resume is None:
        model = TopoVae(image_size=cfg.image_size, latent_dim=cfg.latent_dim,
                        base_channels=cfg.base_channels)
    else:
        model = resume.model
        start_epoch = resume.epoch
        trace = list(resume.loss_trace)
        if start_epoch >= cfg.epochs:
            raise ValueError(
                f"resume checkpoint already at epoch {start_epoch} >= {cfg.epochs}"
            )
    # on resume, restart the decay curve at the stored epoch's learning rate
    opt = torch.optim.Adam(model.parameters(),
                           lr=cfg.lr * cfg.lr_decay_gamma ** start_epoch)
    sched = torch.optim.lr_scheduler.ExponentialLR(opt, gamma=cfg.lr_decay_gamma)
    shuffle_rng = np.random.default_rng(cfg.seed + start_epoch)

    model.train()
    for epoch in range(start_epoch, cfg.epochs):
        perm = shuffle_rng.permutation(n)
        batches = [perm[s : s + cfg.batch_size] for s in range(0, n, cfg.batch_size)]
        if len(batches) > 1 and len(batches[-1]) == 1:
            # batch norm needs >1 value per channel at 1x1 feature maps
            batches[-2] = np.concatenate([batches[-2], batches.pop()])
        rec_sum = kl_sum = 0.0
        n_batches = 0
        for batch_idx in batches:
            x = _as_batch(dataset, batch_idx)
            mu, logvar = model.encode(x)
            eps = torch.randn_like(mu)
            rec = model.decode(reparameterize(mu, logvar, eps))
            total, rec_l, kl_l = vae_loss(x, rec, mu, logvar, cfg)
            if not torch.isfinite(total):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, batch {n_batches}: "
                    f"recons={rec_l.item():.6g}, kl={kl_l.item():.6g}"
                )
            opt.zero_grad()
            total.backward()
            opt.step()
            rec_sum += rec_l.item()
            kl_sum += kl_l.item()
            n_batches += 1
        trace.append((epoch, rec_sum / n_batches, kl_sum / n_batches))
        if on_epoch is not None:
            on_epoch(epoch, rec_sum / n_batches, kl_sum / n_batches,
                     opt.param_groups[0]["lr"], model)
        sched.step()
    model.eval()
    return VaeCheckpoint(model=model, config=cfg, epoch=cfg.epochs, loss_trace=trace)


# ---------------------------------------------------------------------------
# Inference helpers
# ---------------------------------------------------------------------------


def _topo_tensor(topo: TopoMap | np.ndarray) -> torch.Tensor:
    arr = topo.to_array() if isinstance(topo, TopoMap) else np.asarray(topo, np.float32)
    if arr.ndim != 3:
        raise ValueError(f"expected (3, H, W) sketch, got shape {arr.shape}")
    return torch.from_numpy(arr).float()[None]


@torch.no_grad()
def encode_map(model: TopoVae, topo: TopoMap | np.ndarray) -> LatentCode:
    """Posterior parameters for one sketch; z is the mean code (eps = 0)."""
    model.eval()
    mu, logvar = model.encode(_topo_tensor(topo))
    mu_np = mu[0].numpy().astype(np.float64)
    return LatentCode(mu=mu_np, logvar=logvar[0].numpy().astype(np.float64), z=mu_np.copy())


@torch.no_grad()
def decode_code(model: TopoVae, z: np.ndarray) -> np.ndarray:
    """Decode a latent vector to a real-valued (3, H, W) sketch in (0, 1)."""
    model.eval()
    zt = torch.from_numpy(np.asarray(z, dtype=np.float32))[None]
    return model.decode(zt)[0].numpy()


@torch.no_grad()
def reconstruct_map(model: TopoVae, topo: TopoMap | np.ndarray) -> np.ndarray:
    """Deterministic mean-code reconstruction of a sketch."""
    model.eval()
    x = _topo_tensor(topo)
    mu, _ = model.encode(x)
    return model.decode(mu)[0].numpy()

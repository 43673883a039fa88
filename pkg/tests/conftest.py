"""Shared synthetic data helpers and desk-scale model fixtures."""

from __future__ import annotations

import numpy as np
import pytest
from scipy import ndimage

from terrasketch.dem import DemGrid
from terrasketch.sketch import TopoMap


def directional_grad_check(model, loss_value, h=1e-4, tol=1e-3, min_checked=10,
                           max_tries=8, seed=2, watch_modules=(), extra_signs=None):
    """Compare analytic gradients to central finite differences per tensor.

    Uses a random unit probe direction within each parameter tensor. Central
    differences are only valid on smooth segments, so probes that flip the
    sign of any (leaky-)ReLU input across [theta - h*v, theta + h*v] — or of
    the extra_signs() pattern, for other kinks like |.| — are resampled.
    """
    import torch
    from torch import nn

    watched = [model, *watch_modules]

    def activation_signs() -> "torch.Tensor":
        pats = []
        hooks = [
            m.register_forward_pre_hook(
                lambda mod, inp, pats=pats: pats.append(torch.sign(inp[0]).flatten())
            )
            for w in watched
            for m in w.modules() if isinstance(m, (nn.LeakyReLU, nn.ReLU))
        ]
        with torch.no_grad():
            loss_value()
            if extra_signs is not None:
                pats.append(torch.sign(extra_signs()).flatten())
        for hk in hooks:
            hk.remove()
        return torch.cat(pats)

    model.zero_grad()
    loss = loss_value()
    loss.backward()
    gen = torch.Generator().manual_seed(seed)
    checked = 0
    for name, p in model.named_parameters():
        ok = False
        for _ in range(max_tries):
            v = torch.randn(p.shape, generator=gen, dtype=p.dtype)
            v /= v.norm()
            with torch.no_grad():
                p.add_(h * v)
                s_plus = activation_signs()
                f_plus = loss_value().item()
                p.add_(-2 * h * v)
                s_minus = activation_signs()
                f_minus = loss_value().item()
                p.add_(h * v)
            if not torch.equal(s_plus, s_minus):
                continue  # probe crosses an activation kink; FD invalid here
            fd = (f_plus - f_minus) / (2 * h)
            analytic = (p.grad * v).sum().item()
            if abs(fd) < 1e-6 and abs(analytic) < 1e-6:
                ok = True
                break
            rel = abs(fd - analytic) / max(abs(fd), abs(analytic))
            assert rel < tol, f"{name}: fd={fd}, analytic={analytic}, rel={rel}"
            checked += 1
            ok = True
            break
        if not ok:
            continue  # no kink-free probe found for this tensor
    assert checked >= min_checked, f"only {checked} tensors checked"


def smooth_terrain(size: int, seed: int, relief_m: float = 200.0,
                   base_m: float = 800.0, smooth_px: float = 6.0) -> DemGrid:
    """Deterministic smooth synthetic terrain: filtered noise plus a tilt."""
    rng = np.random.default_rng(seed)
    field = ndimage.gaussian_filter(rng.standard_normal((size, size)), smooth_px)
    field = (field - field.min()) / (field.max() - field.min())
    yy, xx = np.mgrid[0:size, 0:size] / max(size - 1, 1)
    heights = base_m + relief_m * (0.8 * field + 0.2 * (xx + yy) / 2)
    return DemGrid(heights, pixel_size_m=2.0, origin_id=f"synth{seed}")


def smooth_unit_patch(size: int, seed: int, smooth_px: float = 6.0) -> np.ndarray:
    """Random smooth array min-max scaled to [0, 1]."""
    rng = np.random.default_rng(seed)
    field = ndimage.gaussian_filter(rng.standard_normal((size, size)), smooth_px)
    return (field - field.min()) / (field.max() - field.min())


def _thick_line(size: int, rng: np.random.Generator, thick: int,
                margin: int = 6) -> np.ndarray:
    m = np.zeros((size, size), bool)
    y0, x0 = rng.integers(margin, size - margin, 2)
    y1, x1 = rng.integers(margin, size - margin, 2)
    t = np.linspace(0.0, 1.0, 4 * size)
    ys = np.rint(y0 + (y1 - y0) * t).astype(int)
    xs = np.rint(x0 + (x1 - x0) * t).astype(int)
    m[ys, xs] = True
    return ndimage.binary_dilation(m, np.ones((thick, thick), bool))


def stroke_maps(n: int, size: int, seed: int, thick: int = 5,
                rings: int = 2) -> list[TopoMap]:
    """Synthetic sketches: ring contours in green, one line each in red/blue."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size]
    st = np.ones((thick, thick), bool)
    maps = []
    for _ in range(n):
        green = np.zeros((size, size), bool)
        for _ in range(rings):
            cy, cx = rng.integers(size // 3, 2 * size // 3, 2)
            r = rng.integers(size // 6, size // 4)
            green |= np.abs(np.hypot(yy - cy, xx - cx) - r) < 1.0
        green = ndimage.binary_dilation(green, st)
        red = _thick_line(size, rng, thick)
        blue = _thick_line(size, rng, thick) & ~red
        red = red & ~blue
        maps.append(TopoMap.from_masks(red, green, blue))
    return maps


def stroke_arrays(n: int, size: int, seed: int, thick: int = 5,
                  rings: int = 2) -> list[np.ndarray]:
    return [m.to_array() for m in stroke_maps(n, size, seed, thick, rings)]


def overfit_stroke_maps(n: int = 8, size: int = 64) -> list[TopoMap]:
    """Sketch family for memorization checks: fixed ring contours shared by
    all maps, plus one red and one blue line per map rotating about fixed
    pivots — n distinct maps on a one-parameter manifold."""
    yy, xx = np.mgrid[0:size, 0:size]
    st = np.ones((7, 7), bool)
    green = np.zeros((size, size), bool)
    for cy, cx, r in [(18, 20, 9), (44, 40, 12), (26, 46, 7), (46, 16, 9)]:
        green |= np.abs(np.hypot(yy - cy, xx - cx) - r) < 1.0
    green = ndimage.binary_dilation(green, np.ones((5, 5), bool))

    def center_line(theta: float, cy: int, cx: int, half: int) -> np.ndarray:
        m = np.zeros((size, size), bool)
        t = np.linspace(-half, half, 4 * size)
        ys = np.clip(np.rint(cy + t * np.sin(theta)).astype(int), 0, size - 1)
        xs = np.clip(np.rint(cx + t * np.cos(theta)).astype(int), 0, size - 1)
        m[ys, xs] = True
        return ndimage.binary_dilation(m, st)

    maps = []
    for k in range(n):
        theta = np.pi * k / n
        red = center_line(theta, 24, 24, 20)
        blue = center_line(theta + np.pi / 2, 42, 42, 18) & ~red
        red = red & ~blue
        maps.append(TopoMap.from_masks(red, green, blue))
    return maps


def sketch_to_relief_pairs(n: int, size: int, seed: int):
    """Sketch/DEM training pairs where relief is a smooth function of strokes."""
    pairs = []
    for m in stroke_arrays(n, size, seed=seed, thick=5, rings=1):
        relief = ndimage.gaussian_filter(m[0] * 1.0 - m[2] * 1.0 + 0.3 * m[1], 4.0)
        relief = (relief - relief.min()) / max(relief.max() - relief.min(), 1e-9)
        pairs.append((m, relief.astype(np.float32)))
    return pairs


@pytest.fixture(scope="session")
def tiny_vae_ckpt_256(tmp_path_factory):
    """Untrained thin-channel 256 px stage-1 checkpoint for contract tests."""
    import torch

    from terrasketch.vae import TopoVae, VaeCheckpoint, VaeConfig

    torch.manual_seed(0)
    cfg = VaeConfig(image_size=256, base_channels=4, seed=0, epochs=0)
    model = TopoVae(image_size=256, latent_dim=128, base_channels=4)
    model.eval()
    ckpt = VaeCheckpoint(model=model, config=cfg, epoch=0, loss_trace=[])
    path = tmp_path_factory.mktemp("ckpts") / "vae256.ckpt"
    ckpt.save(path)
    return path


@pytest.fixture(scope="session")
def tiny_gan_ckpt_256(tmp_path_factory):
    """Untrained thin-channel 256 px stage-2 checkpoint for contract tests."""
    import torch

    from terrasketch.cgan import GanCheckpoint, GanConfig, PatchDiscriminator, Pix2PixGenerator

    torch.manual_seed(0)
    cfg = GanConfig(image_size=256, ngf=4, ndf=4, num_downs=8, epochs=0, seed=0)
    gen = Pix2PixGenerator(num_downs=8, ngf=4)
    disc = PatchDiscriminator(ndf=4)
    gen.eval()
    disc.eval()
    ckpt = GanCheckpoint(generator=gen, discriminator=disc, config=cfg,
                         epoch=0, loss_trace=[])
    path = tmp_path_factory.mktemp("ckpts") / "gan256.ckpt"
    ckpt.save(path)
    return path

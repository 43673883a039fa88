"""Latent-space terrain tools: interpolation between sketches and variant sampling.

Both operate on the stage-1 latent space. Interpolation uses the deterministic
mean codes of the two endpoints; variants perturb the posterior with seeded
Gaussian draws scaled by eps_scale. Decoded outputs are real-valued (3, H, W)
sketch arrays, thresholdable at 0.5 for display.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .sketch import TopoMap
from .vae import TopoVae, decode_code, encode_map

__all__ = [
    "DEFAULT_INTERPOLATION_GAMMAS",
    "InterpolationRequest",
    "VariantRequest",
    "interpolate_codes",
    "interpolate_terrains",
    "sample_variants",
]

# default five-step blend used by the CLI and service
DEFAULT_INTERPOLATION_GAMMAS = (0.167, 0.334, 0.501, 0.668, 0.835)


@dataclass(frozen=True)
class InterpolationRequest:
    topo_a: TopoMap
    topo_b: TopoMap
    gammas: tuple[float, ...] = DEFAULT_INTERPOLATION_GAMMAS

    def __post_init__(self):
        gammas = tuple(float(g) for g in self.gammas)
        if not gammas:
            raise ValueError("gammas must be non-empty")
        if any(not 0.0 <= g <= 1.0 for g in gammas):
            raise ValueError(f"gammas outside [0, 1]: {gammas}")
        object.__setattr__(self, "gammas", gammas)


@dataclass(frozen=True)
class VariantRequest:
    topo: TopoMap
    n_variants: int
    eps_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_variants < 1:
            raise ValueError("n_variants must be >= 1")
        if self.eps_scale < 0:
            raise ValueError("eps_scale must be >= 0")


def interpolate_codes(z1: np.ndarray, z2: np.ndarray, gamma_interp: float) -> np.ndarray:
    """Convex combination gamma * z1 + (1 - gamma) * z2.

    gamma is the degree of dominance of the first code: 1 returns z1, 0
    returns z2.
    """
    z1 = np.asarray(z1, dtype=np.float64)
    z2 = np.asarray(z2, dtype=np.float64)
    if z1.shape != z2.shape:
        raise ValueError(f"code length mismatch: {z1.shape} vs {z2.shape}")
    if not 0.0 <= gamma_interp <= 1.0:
        raise ValueError(f"gamma_interp outside [0, 1]: {gamma_interp}")
    return gamma_interp * z1 + (1.0 - gamma_interp) * z2


def interpolate_terrains(req: InterpolationRequest, model: TopoVae) -> list[np.ndarray]:
    """Decode the latent blend of two sketches at each requested gamma.

    Endpoint codes are the deterministic posterior means, so gamma = 1
    reproduces the mean reconstruction of topo_a exactly.
    """
    z1 = encode_map(model, req.topo_a).mu
    z2 = encode_map(model, req.topo_b).mu
    return [decode_code(model, interpolate_codes(z1, z2, g)) for g in req.gammas]


def sample_variants(req: VariantRequest, model: TopoVae) -> list[np.ndarray]:
    """Decode seeded posterior samples z = mu + sigma * eps around one sketch.

    eps draws are i.i.d. standard normal from a generator seeded with
    req.seed, scaled by eps_scale; eps_scale = 0 collapses every variant to
    the mean reconstruction.
    """
    code = encode_map(model, req.topo)
    rng = np.random.default_rng(req.seed)
    outputs = []
    for _ in range(req.n_variants):
        eps = rng.standard_normal(code.mu.shape[0]) * req.eps_scale
        z = code.mu + code.sigma * eps
        outputs.append(decode_code(model, z))
    return outputs

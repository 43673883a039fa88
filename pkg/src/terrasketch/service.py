"""Local HTTP inference service for the sketch UI.

Checkpoints load once at startup and are treated as immutable afterwards, so
requests can run concurrently without locking. Responses carry base64 PNGs:
a 16-bit DEM in normalized units (sidecar gives the 0-1 range) and an 8-bit
hillshade preview.
"""

from __future__ import annotations

import asyncio
import base64
import io
import time
from pathlib import Path
from typing import Optional

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from PIL import Image
from pydantic import BaseModel, Field

from .cgan import GanCheckpoint, generate_patch
from .latent import InterpolationRequest, VariantRequest, interpolate_terrains, sample_variants
from .sketch import TopoMap
from .vae import VaeCheckpoint, reconstruct_map
from . import viz

__all__ = ["create_app", "MAX_VARIANTS"]

MAX_VARIANTS = 16


class GenerateIn(BaseModel):
    sketch_png_b64: str
    through_vae: bool = False


class VariantsIn(BaseModel):
    sketch_png_b64: str
    n: int = 4
    eps_scale: float = 1.0
    seed: int = 0


class InterpolateIn(BaseModel):
    sketch_a_b64: str
    sketch_b_b64: str
    gammas: list[float] = Field(default_factory=lambda: [0.167, 0.334, 0.501, 0.668, 0.835])


class GenerateOut(BaseModel):
    dem_png16_b64: str
    sidecar: dict
    hillshade_png_b64: str
    latency_ms: float


class _Models:
    def __init__(self, vae_ckpt: Path, gan_ckpt: Path):
        self.vae = VaeCheckpoint.load(vae_ckpt)
        self.gan = GanCheckpoint.load(gan_ckpt)
        if self.vae.model.image_size != self.gan.config.image_size:
            raise ValueError("stage-1 and stage-2 checkpoints disagree on image size")
        self.image_size = self.gan.config.image_size


def _decode_sketch(b64: str, size: int) -> TopoMap:
    try:
        raw = base64.b64decode(b64, validate=True)
        img = Image.open(io.BytesIO(raw))
        img.load()
    except Exception as exc:
        raise HTTPException(status_code=400, detail="bad_sketch_encoding") from exc
    if img.size != (size, size):
        # nearest-neighbor keeps binary channel masks binary
        img = img.convert("RGB").resize((size, size), Image.NEAREST)
    return TopoMap.from_image(img)


def _png_b64(image: Image.Image) -> str:
    buf = io.BytesIO()
    image.save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode()


def _dem_response(values01: np.ndarray, started: float) -> GenerateOut:
    # quantize against the full declared [0, 1] range so the sidecar inverts it
    values = np.clip(values01, 0.0, 1.0)
    buf = io.BytesIO()
    Image.fromarray(np.rint(values * 65535).astype(np.uint16)).save(buf, format="PNG")
    shade = viz.normalized_dem_hillshade(values)
    return GenerateOut(
        dem_png16_b64=base64.b64encode(buf.getvalue()).decode(),
        sidecar={"h_min": 0.0, "h_max": 1.0, "pixel_size_m": 2.0},
        hillshade_png_b64=_png_b64(shade),
        latency_ms=(time.monotonic() - started) * 1000.0,
    )


def create_app(vae_ckpt: Optional[str | Path] = None,
               gan_ckpt: Optional[str | Path] = None,
               timeout_ms: int = 30000,
               defer_load: bool = False) -> FastAPI:
    """Build the service app; checkpoints load at startup unless defer_load."""
    from contextlib import asynccontextmanager

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        if not defer_load and vae_ckpt is not None and gan_ckpt is not None:
            app.state.models = _Models(Path(vae_ckpt), Path(gan_ckpt))
        yield

    app = FastAPI(title="terrasketch inference service", lifespan=lifespan)
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"],
    )
    app.state.models = None
    app.state.ckpt_paths = (vae_ckpt, gan_ckpt)
    app.state.timeout_s = timeout_ms / 1000.0

    def models() -> _Models:
        m = app.state.models
        if m is None:
            raise HTTPException(status_code=503, detail="checkpoints_not_loaded")
        return m

    async def _run_with_timeout(fn):
        loop = asyncio.get_running_loop()
        try:
            return await asyncio.wait_for(
                loop.run_in_executor(None, fn), timeout=app.state.timeout_s
            )
        except asyncio.TimeoutError:
            raise HTTPException(status_code=503, detail="timeout") from None

    @app.get("/api/health")
    def health() -> dict:
        m = app.state.models
        return {
            "status": "ready" if m is not None else "loading",
            "checkpoints": {
                "vae": str(app.state.ckpt_paths[0]),
                "gan": str(app.state.ckpt_paths[1]),
            },
        }

    @app.post("/api/generate", response_model=GenerateOut)
    async def generate(body: GenerateIn) -> GenerateOut:
        m = models()
        topo = _decode_sketch(body.sketch_png_b64, m.image_size)

        def work() -> GenerateOut:
            started = time.monotonic()
            cond = reconstruct_map(m.vae.model, topo) if body.through_vae else topo
            values = generate_patch(m.gan.generator, cond)
            return _dem_response(values, started)

        return await _run_with_timeout(work)

    @app.post("/api/variants", response_model=list[GenerateOut])
    async def variants(body: VariantsIn) -> list[GenerateOut]:
        m = models()
        if not 1 <= body.n <= MAX_VARIANTS:
            raise HTTPException(status_code=400, detail="n_out_of_range")
        if body.eps_scale < 0:
            raise HTTPException(status_code=400, detail="invalid_eps_scale")
        topo = _decode_sketch(body.sketch_png_b64, m.image_size)

        def work() -> list[GenerateOut]:
            req = VariantRequest(topo=topo, n_variants=body.n,
                                 eps_scale=body.eps_scale, seed=body.seed)
            out = []
            for rec in sample_variants(req, m.vae.model):
                started = time.monotonic()
                out.append(_dem_response(generate_patch(m.gan.generator, rec), started))
            return out

        return await _run_with_timeout(work)

    @app.post("/api/interpolate", response_model=list[GenerateOut])
    async def interpolate(body: InterpolateIn) -> list[GenerateOut]:
        m = models()
        if not body.gammas or any(not 0.0 <= g <= 1.0 for g in body.gammas):
            raise HTTPException(status_code=400, detail="invalid_gamma")
        topo_a = _decode_sketch(body.sketch_a_b64, m.image_size)
        topo_b = _decode_sketch(body.sketch_b_b64, m.image_size)

        def work() -> list[GenerateOut]:
            req = InterpolationRequest(topo_a=topo_a, topo_b=topo_b,
                                       gammas=tuple(body.gammas))
            out = []
            for rec in interpolate_terrains(req, m.vae.model):
                started = time.monotonic()
                out.append(_dem_response(generate_patch(m.gan.generator, rec), started))
            return out

        return await _run_with_timeout(work)

    return app

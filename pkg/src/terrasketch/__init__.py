"""Sketch-driven terrain authoring.

Stage 1 learns a generative latent space over 3-channel topographic sketches
(green level-sets, red ridges, blue valleys) with a variational autoencoder;
stage 2 translates sketches into normalized elevation patches with a
conditional GAN. Latent-space tools interpolate between terrains and sample
variants of one sketch; a CLI and a local HTTP service expose the pipeline.
"""

from .dem import DemGrid, EvalReport, NormalizedPatch
from .sketch import TopoMap

__version__ = "0.1.0"

__all__ = ["DemGrid", "NormalizedPatch", "EvalReport", "TopoMap", "__version__"]

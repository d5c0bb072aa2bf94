"""Controllable human-centric keyframe interpolation on a synthetic body world.

Subpackages:
    body       parametric articulated body (blend shapes + LBS + camera)
    render     software point-splat renderer for control images
    dataset    synthetic clip generation, filtering, storage
    control    3D-informed control model (encoders + fusion)
    diffusion  flow-matching video denoiser, LoRA, training, sampling
    evaluate   interpolation pipelines, PSNR metrics, benchmarks
    cli        command-line entry point
"""

__version__ = "0.1.0"

from .raster import get_backend  # noqa: F401

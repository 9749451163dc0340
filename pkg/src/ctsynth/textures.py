"""Tumor intensity texture: coarse Gaussian noise, cubic upsample, blur.

The texture field starts as i.i.d. Gaussian noise N(mu, sigma_g) sampled on
a grid ``coarse_factor`` times coarser than the target, gets tricubically
upsampled (edge-clamped), and finally receives a Gaussian blur to mimic the
point-spread softness of reconstructed CT. All stages preserve the mean to
well under 1 HU, and the output is a deterministic function of (dims, spec).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .core import VoxelGrid


@dataclass(frozen=True)
class TextureSpec:
    mu: float
    sigma_g: float
    coarse_factor: int = 4
    blur_sigma: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.sigma_g < 0:
            raise ValueError("sigma_g must be >= 0")
        if self.coarse_factor < 1:
            raise ValueError("coarse_factor must be >= 1")
        if self.blur_sigma < 0:
            raise ValueError("blur_sigma must be >= 0")


def generate_texture(dims, spec: TextureSpec, spacing=(1.0, 1.0, 1.0)) -> VoxelGrid:
    """Generate an HU texture block of the given dims."""
    dims = tuple(int(d) for d in dims)
    if any(d <= 0 for d in dims):
        raise ValueError(f"dims must be positive, got {dims}")
    if spec.sigma_g == 0:
        return VoxelGrid(np.full(dims, spec.mu, dtype=np.float32), spacing)
    rng = np.random.default_rng(spec.seed)
    cf = spec.coarse_factor
    if cf == 1:
        field = rng.normal(spec.mu, spec.sigma_g, size=dims).astype(np.float32)
    else:
        coarse_dims = [int((d - 1) // cf) + 2 for d in dims]
        coarse = rng.normal(spec.mu, spec.sigma_g, size=coarse_dims)
        fine = np.indices(dims, dtype=np.float64) / float(cf)
        field = ndimage.map_coordinates(coarse, fine, order=3, mode="nearest").astype(
            np.float32
        )
    if spec.blur_sigma > 0:
        field = ndimage.gaussian_filter(field, sigma=spec.blur_sigma, mode="nearest")
    return VoxelGrid(field, spacing)

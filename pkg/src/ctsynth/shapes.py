"""Tumor shape generation: voxelized ellipsoids deformed elastically.

Small lesions grow roughly spherically while larger ones drift elliptical,
so shapes start from an ellipsoid with per-class eccentricity limits and
then pass through a seeded random elastic deformation. The deformation is
a coarse grid of i.i.d. Gaussian 3-vectors (std ``sigma_d``), smoothed,
trilinearly upsampled to a per-voxel displacement field, and applied with
nearest-neighbor resampling. Everything is deterministic given the seed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage

from .core import BinaryMask, VoxelGrid, bounding_slices, label_count, warp_by_displacement
from .errors import EmptyMaskError, GenerationError, SubResolutionError

ECCENTRICITY_CAP = 3.0


@dataclass(frozen=True)
class EllipsoidSpec:
    """Semi-axis lengths in mm."""

    a: float
    b: float
    c: float

    def __post_init__(self) -> None:
        axes = (self.a, self.b, self.c)
        if any(not math.isfinite(v) or v <= 0 for v in axes):
            raise SubResolutionError(f"semi-axes must be positive, got {axes}")
        if max(axes) / min(axes) > ECCENTRICITY_CAP * (1 + 1e-9):
            raise ValueError(
                f"eccentricity {max(axes) / min(axes):.3f} exceeds cap {ECCENTRICITY_CAP}"
            )

    @property
    def equivalent_radius_mm(self) -> float:
        return (self.a * self.b * self.c) ** (1.0 / 3.0)


@dataclass(frozen=True)
class DeformSpec:
    """Elastic deformation parameters.

    ``sigma_d`` is the displacement magnitude in voxels. ``smooth_sigma``
    smooths the control lattice (units: control cells, i.e. one unit spans
    ``control_spacing`` voxels); the field is renormalized afterwards so
    sigma_d keeps meaning displacement std regardless of smoothing.
    """

    sigma_d: float
    control_spacing: int = 8
    smooth_sigma: float = 2.5
    seed: int = 0

    def __post_init__(self) -> None:
        if self.sigma_d < 0:
            raise ValueError("sigma_d must be >= 0")
        if self.control_spacing < 2:
            raise ValueError("control_spacing must be >= 2")
        if self.smooth_sigma < 0:
            raise ValueError("smooth_sigma must be >= 0")


def make_ellipsoid(spec: EllipsoidSpec, spacing) -> BinaryMask:
    """Voxelize an ellipsoid on a tight odd-sized grid centered on it.

    A voxel is foreground iff its center satisfies
    ``(x/a)^2 + (y/b)^2 + (z/c)^2 <= 1``. Semi-axes below one voxel raise
    SubResolutionError.
    """
    spacing = tuple(float(s) for s in spacing)
    semis_vox = (spec.a / spacing[0], spec.b / spacing[1], spec.c / spacing[2])
    if min(semis_vox) < 1.0:
        raise SubResolutionError(
            f"semi-axes {semis_vox} voxels: every axis must span at least one voxel"
        )
    halves = [int(math.floor(s)) for s in semis_vox]
    coords = np.meshgrid(
        *(np.arange(-h, h + 1, dtype=np.float64) for h in halves), indexing="ij"
    )
    q = sum((c / s) ** 2 for c, s in zip(coords, semis_vox))
    return BinaryMask(VoxelGrid(q <= 1.0, spacing))


def _noise_retention_3d(sigma: float, truncate: float = 3.0) -> float:
    """Std factor by which Gaussian smoothing shrinks i.i.d. 3D noise."""
    n = 2 * int(truncate * sigma + 0.5) + 41
    impulse = np.zeros(n)
    impulse[n // 2] = 1.0
    k = ndimage.gaussian_filter1d(impulse, sigma, mode="constant", truncate=truncate)
    return float((k**2).sum()) ** 1.5


def _displacement_field(dims, spec: DeformSpec, seed: int) -> np.ndarray:
    """Per-voxel displacement (dims + (3,)) from a smoothed coarse lattice.

    The lattice is padded before smoothing so every kept control point sees
    a full kernel, then renormalized back to std sigma_d. Components are
    clamped to +-3 sigma_d, which bounds how far foreground can travel.
    """
    cs = spec.control_spacing
    rng = np.random.default_rng(seed)
    n_ctrl = [int((d - 1) // cs) + 2 for d in dims]
    if spec.smooth_sigma > 0:
        s = spec.smooth_sigma
        margin = int(3.0 * s + 0.5) + 1
        ctrl = rng.normal(0.0, spec.sigma_d, size=(3, *(n + 2 * margin for n in n_ctrl)))
        ctrl = ndimage.gaussian_filter(
            ctrl, sigma=(0, s, s, s), mode="constant", truncate=3.0
        )
        ctrl = ctrl[:, margin:-margin, margin:-margin, margin:-margin]
        ctrl /= _noise_retention_3d(s)
    else:
        ctrl = rng.normal(0.0, spec.sigma_d, size=(3, *n_ctrl))
    fine = np.indices(dims, dtype=np.float32) / np.float32(cs)
    field = np.empty((*dims, 3), dtype=np.float32)
    for axis in range(3):
        field[..., axis] = ndimage.map_coordinates(
            ctrl[axis], fine, order=1, mode="nearest"
        )
    limit = 3.0 * spec.sigma_d
    np.clip(field, -limit, limit, out=field)
    return field


def deform_once(mask: BinaryMask, spec: DeformSpec, seed: int | None = None) -> BinaryMask:
    """One seeded elastic deformation, no connectivity enforcement.

    The output grid is the input padded by ``ceil(3 * sigma_d) + 1`` voxels
    per side; foreground never moves farther than ``3 * sigma_d`` voxels
    beyond the original bounding box. ``sigma_d == 0`` is the identity.
    """
    if not mask.data.any():
        raise EmptyMaskError("cannot deform an empty mask")
    if spec.sigma_d == 0:
        return mask
    use_seed = spec.seed if seed is None else seed
    pad = int(math.ceil(3.0 * spec.sigma_d)) + 1
    padded = np.pad(mask.data, pad)
    field = _displacement_field(padded.shape, spec, use_seed)
    warped = warp_by_displacement(
        VoxelGrid(padded.astype(np.uint8), mask.spacing), field, interpolation="nearest"
    )
    return BinaryMask(VoxelGrid(warped.data >= 0.5, mask.spacing))


VOLUME_BAND = (0.8, 1.2)


def _acceptable(out: BinaryMask, input_count: int, spec: DeformSpec) -> bool:
    if not out.data.any() or label_count(out, connectivity=26) != 1:
        return False
    if spec.sigma_d <= spec.control_spacing / 2:
        ratio = out.count / input_count
        if not VOLUME_BAND[0] <= ratio <= VOLUME_BAND[1]:
            return False
    return True


def elastic_deform(mask: BinaryMask, spec: DeformSpec, max_attempts: int = 20) -> BinaryMask:
    """Elastic deformation that yields a single 26-connected lesion.

    Deformations occasionally pinch a shape apart or change its volume too
    much; those draws are discarded and resampled with seed+1, seed+2, ...
    (bounded). For sigma_d <= control_spacing/2 the output volume is held
    within +-20% of the input. Identical inputs give bit-identical outputs.
    """
    if spec.sigma_d == 0:
        return deform_once(mask, spec)
    for attempt in range(max_attempts):
        out = deform_once(mask, spec, seed=spec.seed + attempt)
        if _acceptable(out, mask.count, spec):
            return out
    raise GenerationError(
        f"no acceptable deformation in {max_attempts} attempts (sigma_d={spec.sigma_d})"
    )


def generate_shape(
    ellipsoid: EllipsoidSpec,
    deform: DeformSpec,
    spacing,
    radius_range_mm: tuple[float, float] | None = None,
    max_attempts: int = 20,
) -> BinaryMask:
    """Full shape stage: voxelize, deform, and (optionally) hold a size class.

    When ``radius_range_mm`` is given, deformations whose achieved
    equivalent-sphere radius falls outside ``[lo, hi)`` are resampled, so
    emitted ground truth provably stays in its size class.
    """
    base = make_ellipsoid(ellipsoid, spacing)
    if deform.sigma_d == 0:
        return base
    voxvol = base.grid.voxel_volume_mm3
    for attempt in range(max_attempts):
        out = deform_once(base, deform, seed=deform.seed + attempt)
        if not _acceptable(out, base.count, deform):
            continue
        if radius_range_mm is not None:
            r = equivalent_radius_mm(out.count, voxvol)
            lo, hi = radius_range_mm
            if not (lo <= r < hi):
                continue
        return out
    raise GenerationError(
        f"no acceptable deformed shape in {max_attempts} attempts "
        f"(sigma_d={deform.sigma_d}, radius_range={radius_range_mm})"
    )


def equivalent_radius_mm(voxel_count: int, voxel_volume_mm3: float) -> float:
    """Equivalent-sphere radius (3V / 4pi)^(1/3) of a lesion volume."""
    volume = voxel_count * voxel_volume_mm3
    return (3.0 * volume / (4.0 * math.pi)) ** (1.0 / 3.0)


def crop_to_foreground(mask: BinaryMask) -> BinaryMask:
    """Tight bounding-box crop; raises on empty input."""
    box = bounding_slices(mask.data)
    return BinaryMask(VoxelGrid(mask.data[box], mask.spacing))


def with_seed(spec: DeformSpec, seed: int) -> DeformSpec:
    return replace(spec, seed=seed)

"""Tumor composition: carve texture into the host, warp, brighten the rim.

Pipeline order is fixed: place -> carve texture -> mass effect -> capsule.
The capsule must land on the final tumor boundary, so it is applied after
the mass-effect warp, and the label mask marks exactly the deformed shape
(label 2) regardless of the image-space warp. Every stage is local: voxels
outside the declared influence region are bit-identical to the host.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import ndimage

from .core import (
    BinaryMask,
    LabelMask,
    VoxelGrid,
    ball_structure,
    bounding_slices,
    grow_slices,
)
from .errors import EmptyMaskError, ShapeMismatchError
from .niftiio import CtVolume
from .placement import PlacementParams, select_location
from .shapes import (
    DeformSpec,
    EllipsoidSpec,
    crop_to_foreground,
    equivalent_radius_mm,
    generate_shape,
)
from .textures import TextureSpec, generate_texture
from .vessels import VesselParams, segment_vessels

CUBE = np.ones((3, 3, 3), dtype=bool)


@dataclass(frozen=True)
class TumorSpec:
    """All generator parameters for one tumor."""

    ellipsoid: EllipsoidSpec
    deform: DeformSpec
    texture: TextureSpec
    mass_effect_strength: float = 0.2
    influence_factor: float = 1.5
    capsule_width_voxels: int = 2
    capsule_delta_hu: float = 20.0
    edge_blend_sigma: float = 1.0
    size_class: str | None = None
    radius_range_mm: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.mass_effect_strength <= 0.5:
            raise ValueError("mass_effect_strength must be in [0, 0.5]")
        if self.influence_factor < 1.0:
            raise ValueError("influence_factor must be >= 1")
        if self.capsule_width_voxels < 0:
            raise ValueError("capsule_width_voxels must be >= 0")
        if self.edge_blend_sigma < 0:
            raise ValueError("edge_blend_sigma must be >= 0")


@dataclass(frozen=True)
class TumorRecord:
    """Everything needed to reproduce and audit one synthesized tumor."""

    size_class: str | None
    offset: tuple[int, int, int]
    center: tuple[int, int, int]
    voxel_count: int
    volume_mm3: float
    equivalent_radius_mm: float
    influence_radius_mm: float
    blend_margin_voxels: int
    capsule_width_voxels: int
    capsule_delta_hu: float
    mass_effect_strength: float
    spec: dict = field(repr=False)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["offset"] = list(self.offset)
        out["center"] = list(self.center)
        return out


def tumor_spec_to_dict(spec: TumorSpec) -> dict:
    d = asdict(spec)
    if spec.radius_range_mm is not None:
        d["radius_range_mm"] = list(spec.radius_range_mm)
    return d


def tumor_spec_from_dict(d: dict) -> TumorSpec:
    d = dict(d)
    d["ellipsoid"] = EllipsoidSpec(**d["ellipsoid"])
    d["deform"] = DeformSpec(**d["deform"])
    d["texture"] = TextureSpec(**d["texture"])
    if d.get("radius_range_mm") is not None:
        d["radius_range_mm"] = tuple(d["radius_range_mm"])
    return TumorSpec(**d)


def _blend_margin(sigma: float) -> int:
    # matches scipy's gaussian_filter kernel support at truncate=3.0
    return int(3.0 * sigma + 0.5) if sigma > 0 else 0


def _mass_effect_inplace(
    data: np.ndarray, spacing, center, lam: float, radius_mm: float
) -> None:
    """Bounded radial push-out warp around ``center``, editing ``data``.

    Backward-sampling map: the output voxel at physical distance d < R
    samples the input at d * (1 - lam * (1 - d/R)^2); the displacement is
    zero at d >= R and maximal near the tumor surface.
    """
    if lam == 0.0 or radius_mm <= 0.0:
        return
    rad_vox = [int(math.ceil(radius_mm / s)) for s in spacing]
    sl = tuple(
        slice(max(0, c - rv), min(n, c + rv + 1))
        for c, rv, n in zip(center, rad_vox, data.shape)
    )
    if any(s.stop <= s.start for s in sl):
        return
    phys = [
        (np.arange(s.start, s.stop, dtype=np.float32) - c) * np.float32(sp)
        for s, c, sp in zip(sl, center, spacing)
    ]
    dx, dy, dz = np.meshgrid(*phys, indexing="ij")
    d = np.sqrt(dx * dx + dy * dy + dz * dz)
    R = np.float32(radius_mm)
    scale = np.where(d < R, 1.0 - np.float32(lam) * (1.0 - d / R) ** 2, np.float32(1.0))
    scale = scale.astype(np.float32)
    sub = data[sl]
    local_center = [c - s.start for c, s in zip(center, sl)]
    base = np.indices(sub.shape, dtype=np.float32)
    coords = [lc + (base[i] - lc) * scale for i, lc in enumerate(local_center)]
    data[sl] = ndimage.map_coordinates(sub, coords, order=1, mode="nearest")


def _capsule_inplace(data: np.ndarray, tumor: np.ndarray, width: int, delta: float) -> None:
    """Add ``delta`` HU to the rim dilate(tumor, width) \\ erode(tumor, width)."""
    if width == 0 or delta == 0.0 or not tumor.any():
        return
    box = grow_slices(bounding_slices(tumor), width + 1, tumor.shape)
    crop = tumor[box]
    ball = ball_structure(width)
    rim = ndimage.binary_dilation(crop, structure=ball) & ~ndimage.binary_erosion(
        crop, structure=ball, border_value=1
    )
    sub = data[box]
    sub[rim] += np.float32(delta)


def _carve_texture_inplace(
    data: np.ndarray,
    shape: BinaryMask,
    offset: tuple[int, int, int],
    texture_spec: TextureSpec,
    blend_sigma: float,
) -> None:
    """Blend generated texture into the host over a Gaussian-feathered edge."""
    sdims = shape.dims
    margin = _blend_margin(blend_sigma)
    lo = [max(0, o - margin) for o in offset]
    hi = [min(n, o + sd + margin) for o, sd, n in zip(offset, sdims, data.shape)]
    region = tuple(slice(a, b) for a, b in zip(lo, hi))
    rdims = tuple(b - a for a, b in zip(lo, hi))
    placed = np.zeros(rdims, dtype=bool)
    local = tuple(slice(o - a, o - a + sd) for o, a, sd in zip(offset, lo, sdims))
    placed[local] = shape.data
    if blend_sigma > 0:
        w = ndimage.gaussian_filter(
            placed.astype(np.float32), sigma=blend_sigma, mode="constant", truncate=3.0
        )
        np.clip(w, 0.0, 1.0, out=w)
    else:
        w = placed.astype(np.float32)
    tex = generate_texture(rdims, texture_spec).data
    sub = data[region]
    touched = w > 0
    sub[touched] += w[touched] * (tex[touched] - sub[touched])


def apply_mass_effect(
    volume: CtVolume, tumor: BinaryMask, center, lam: float, alpha: float
) -> CtVolume:
    """Displace tissue around the tumor outward; identity when lam == 0."""
    if not 0.0 <= lam <= 0.5:
        raise ValueError("lam must be in [0, 0.5]")
    if lam == 0.0:
        return volume
    if volume.dims != tumor.dims:
        raise ShapeMismatchError("volume and tumor dims differ")
    r_eq = equivalent_radius_mm(tumor.count, tumor.grid.voxel_volume_mm3)
    data = volume.data.astype(np.float32, copy=True)
    _mass_effect_inplace(data, volume.spacing, tuple(int(c) for c in center), lam, alpha * r_eq)
    return CtVolume(VoxelGrid(data, volume.spacing), affine=volume.affine)


def apply_capsule(volume: CtVolume, tumor: BinaryMask, width: int, delta: float) -> CtVolume:
    """Brighten the tumor rim by exactly ``delta`` HU; identity when width or delta is 0."""
    if width < 0:
        raise ValueError("width must be >= 0")
    if width == 0 or delta == 0.0:
        return volume
    if volume.dims != tumor.dims:
        raise ShapeMismatchError("volume and tumor dims differ")
    data = volume.data.astype(np.float32, copy=True)
    _capsule_inplace(data, tumor.data, width, delta)
    return CtVolume(VoxelGrid(data, volume.spacing), affine=volume.affine)


def influence_region(tumor: BinaryMask, record: TumorRecord) -> BinaryMask:
    """Voxels a compose call may have modified; everything else is untouched.

    Union of the tumor dilated (Chebyshev, matching the separable blend
    kernel's cube support) by max(blend margin, capsule width) and the
    mass-effect influence ball around the record's center.
    """
    margin = max(record.blend_margin_voxels, record.capsule_width_voxels)
    region = tumor.data.copy()
    if margin >= 1:
        region = ndimage.binary_dilation(region, structure=CUBE, iterations=margin)
    if record.mass_effect_strength > 0 and record.influence_radius_mm > 0:
        idx = [
            (np.arange(n, dtype=np.float64) - c) * s
            for n, c, s in zip(tumor.dims, record.center, tumor.spacing)
        ]
        dx, dy, dz = np.meshgrid(*idx, indexing="ij")
        region |= dx * dx + dy * dy + dz * dz < record.influence_radius_mm**2
    return BinaryMask(VoxelGrid(region, tumor.spacing))


def synthesize_tumors(
    volume: CtVolume,
    liver: BinaryMask,
    specs: list[TumorSpec],
    placement: PlacementParams,
    *,
    vessels: BinaryMask | None = None,
    vessel_params: VesselParams | None = None,
) -> tuple[CtVolume, LabelMask, list[TumorRecord]]:
    """Synthesize one or more tumors into a host volume.

    Earlier tumors become forbidden regions for later placements (grown by
    one voxel so components stay 26-disjoint). Returns the composed volume
    (float32), the label mask (liver=1, tumors=2), and one record per tumor.
    """
    if volume.dims != liver.dims:
        raise ShapeMismatchError(f"volume dims {volume.dims} != liver dims {liver.dims}")
    if not liver.data.any():
        raise EmptyMaskError("liver mask is empty")
    if vessels is None:
        vessels = segment_vessels(volume, liver, vessel_params or VesselParams())
    elif vessels.dims != volume.dims:
        raise ShapeMismatchError("vessel mask dims differ from volume")

    work = volume.data.astype(np.float32, copy=True)
    label = liver.data.astype(np.uint8)
    forbidden = vessels.data.copy()
    records: list[TumorRecord] = []

    for i, spec in enumerate(specs):
        shape = generate_shape(
            spec.ellipsoid, spec.deform, volume.spacing, spec.radius_range_mm
        )
        shape = crop_to_foreground(shape)
        pp = replace(placement, seed=placement.seed + i)
        offset = select_location(
            liver, BinaryMask(VoxelGrid(forbidden, liver.spacing)), shape, pp
        )
        sdims = shape.dims
        vol_box = tuple(slice(o, o + sd) for o, sd in zip(offset, sdims))
        center = tuple(int(o + (sd - 1) // 2) for o, sd in zip(offset, sdims))

        _carve_texture_inplace(work, shape, offset, spec.texture, spec.edge_blend_sigma)

        r_eq = equivalent_radius_mm(shape.count, shape.grid.voxel_volume_mm3)
        radius_mm = spec.influence_factor * r_eq if spec.mass_effect_strength > 0 else 0.0
        _mass_effect_inplace(work, volume.spacing, center, spec.mass_effect_strength, radius_mm)

        placed = np.zeros(volume.dims, dtype=bool)
        placed[vol_box] = shape.data
        _capsule_inplace(work, placed, spec.capsule_width_voxels, spec.capsule_delta_hu)

        label[placed] = 2
        forbidden |= ndimage.binary_dilation(placed, structure=CUBE)

        records.append(
            TumorRecord(
                size_class=spec.size_class,
                offset=offset,
                center=center,
                voxel_count=shape.count,
                volume_mm3=shape.count * shape.grid.voxel_volume_mm3,
                equivalent_radius_mm=r_eq,
                influence_radius_mm=radius_mm,
                blend_margin_voxels=_blend_margin(spec.edge_blend_sigma),
                capsule_width_voxels=spec.capsule_width_voxels if spec.capsule_delta_hu else 0,
                capsule_delta_hu=spec.capsule_delta_hu,
                mass_effect_strength=spec.mass_effect_strength,
                spec=tumor_spec_to_dict(spec),
            )
        )

    out_volume = CtVolume(VoxelGrid(work, volume.spacing), affine=volume.affine)
    return out_volume, LabelMask(VoxelGrid(label, volume.spacing)), records


def synthesize_tumor(
    volume: CtVolume,
    liver: BinaryMask,
    spec: TumorSpec,
    placement: PlacementParams,
    *,
    vessels: BinaryMask | None = None,
    vessel_params: VesselParams | None = None,
) -> tuple[CtVolume, LabelMask, TumorRecord]:
    """Single-tumor pipeline: location, shape, texture, post-processing."""
    out, label, records = synthesize_tumors(
        volume, liver, [spec], placement, vessels=vessels, vessel_params=vessel_params
    )
    return out, label, records[0]

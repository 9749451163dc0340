"""Tumor location selection with vessel-collision avoidance.

Candidate centers are drawn uniformly (seeded) from liver foreground voxels
rather than the bounding box, so thin lobes are not undersampled. A
candidate is accepted when the shape is contained in the liver at the
required fraction and does not touch the forbidden mask (vessels dilated by
a safety margin, plus any regions the caller adds, e.g. earlier tumors).
Placement randomness is a separate seed stream from shape/texture so each
component stays independently reproducible.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import BinaryMask, bounding_slices, dilate, grow_slices
from .errors import EmptyMaskError, PlacementExhaustedError, ShapeMismatchError


@dataclass(frozen=True)
class PlacementParams:
    max_attempts: int = 200
    vessel_safety_margin_voxels: int = 1
    containment: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        if not 0.0 < self.containment <= 1.0:
            raise ValueError("containment must be in (0, 1]")
        if self.vessel_safety_margin_voxels < 0:
            raise ValueError("vessel_safety_margin_voxels must be >= 0")


def dilated_obstacles(
    vessels: BinaryMask, margin: int, liver: BinaryMask | None = None
) -> np.ndarray:
    """Vessel mask grown by the safety margin (computed on a crop for speed)."""
    data = vessels.data
    if margin <= 0 or not data.any():
        return data
    box = grow_slices(bounding_slices(data), margin + 1, data.shape)
    crop = BinaryMask.from_array(data[box], vessels.spacing)
    out = np.zeros_like(data)
    out[box] = dilate(crop, margin).data
    return out


def select_location(
    liver: BinaryMask,
    vessels: BinaryMask,
    shape: BinaryMask,
    params: PlacementParams,
) -> tuple[int, int, int]:
    """Pick a voxel offset for the shape grid inside the liver.

    Returns ``(ox, oy, oz)`` such that shape voxel ``(i, j, k)`` lands on
    volume voxel ``(ox+i, oy+j, oz+k)``. Only foreground voxels of the shape
    are tested, so padded shape grids may legally overhang the volume.
    Raises PlacementExhaustedError when no valid offset exists within
    ``max_attempts``; callers are expected to resample the tumor spec.
    """
    if liver.dims != vessels.dims:
        raise ShapeMismatchError(f"liver dims {liver.dims} != vessel dims {vessels.dims}")
    if not liver.data.any():
        raise EmptyMaskError("liver mask is empty")
    if not shape.data.any():
        raise EmptyMaskError("shape mask is empty")

    shape_box = bounding_slices(shape.data)
    shape_extent = tuple(s.stop - s.start for s in shape_box)
    liver_box = bounding_slices(liver.data)
    liver_extent = tuple(s.stop - s.start for s in liver_box)
    if any(se > le for se, le in zip(shape_extent, liver_extent)):
        # no offset can ever work; same remedy as exhaustion (resample spec)
        raise PlacementExhaustedError(
            f"shape bounding box {shape_extent} exceeds liver bounding box {liver_extent}"
        )

    fg = np.argwhere(shape.data).astype(np.int64)
    local_center = np.array(
        [(s.start + s.stop - 1) // 2 for s in shape_box], dtype=np.int64
    )
    forbidden = dilated_obstacles(vessels, params.vessel_safety_margin_voxels)
    candidates = np.argwhere(liver.data).astype(np.int64)
    dims = np.array(liver.dims, dtype=np.int64)
    n_fg = fg.shape[0]
    min_inside = params.containment * n_fg - 1e-9

    rng = np.random.default_rng(params.seed)
    for _ in range(params.max_attempts):
        center = candidates[int(rng.integers(len(candidates)))]
        offset = center - local_center
        placed = fg + offset
        if (placed < 0).any() or (placed >= dims).any():
            continue
        idx = (placed[:, 0], placed[:, 1], placed[:, 2])
        if forbidden[idx].any():
            continue
        if int(liver.data[idx].sum()) < min_inside:
            continue
        return (int(offset[0]), int(offset[1]), int(offset[2]))
    raise PlacementExhaustedError(
        f"no valid location after {params.max_attempts} attempts"
    )

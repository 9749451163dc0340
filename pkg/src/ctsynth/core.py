"""Shared 3D voxel grid types and morphological primitives.

Grids are indexed ``(x, y, z)``. Linear (on-disk) order is x-fastest:
``index = x + nx * (y + ny * z)``, which for an array of shape
``(nx, ny, nz)`` is Fortran ravel order. All operations here are pure:
inputs are never mutated, and identical inputs give identical outputs, so
values are safe to share across concurrent workers.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import (
    EmptyMaskError,
    GridError,
    MaskValueError,
    ShapeMismatchError,
    StructureTooLargeError,
)

Spacing = tuple[float, float, float]


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    """Scalar field on a regular 3D grid with physical voxel spacing in mm.

    ``data`` has shape ``(nx, ny, nz)``; ``spacing`` is mm per voxel along
    each axis and must be strictly positive.
    """

    data: np.ndarray
    spacing: Spacing

    def __post_init__(self) -> None:
        data = np.asarray(self.data)
        if data.ndim != 3 or 0 in data.shape:
            raise GridError(f"expected a non-empty 3D array, got shape {data.shape}")
        spacing = tuple(float(s) for s in self.spacing)
        if len(spacing) != 3 or any(not np.isfinite(s) or s <= 0 for s in spacing):
            raise GridError(f"spacing must be three positive numbers, got {self.spacing!r}")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "spacing", spacing)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape

    @property
    def voxel_volume_mm3(self) -> float:
        sx, sy, sz = self.spacing
        return sx * sy * sz


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """A VoxelGrid restricted to {0, 1}; stored as booleans."""

    grid: VoxelGrid

    def __post_init__(self) -> None:
        g = self.grid
        if g.data.dtype != np.bool_:
            bad = (g.data != 0) & (g.data != 1)
            if bad.any():
                raise MaskValueError("binary mask contains values outside {0, 1}")
            object.__setattr__(self, "grid", VoxelGrid(g.data.astype(bool), g.spacing))

    @classmethod
    def from_array(cls, data: np.ndarray, spacing: Spacing) -> "BinaryMask":
        return cls(VoxelGrid(np.asarray(data), spacing))

    @property
    def data(self) -> np.ndarray:
        return self.grid.data

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.grid.dims

    @property
    def spacing(self) -> Spacing:
        return self.grid.spacing

    @property
    def count(self) -> int:
        return int(self.grid.data.sum())


LABELS = {0: "background", 1: "liver", 2: "tumor"}


@dataclass(frozen=True, eq=False)
class LabelMask:
    """Integer labels {0: background, 1: liver, 2: tumor} on a VoxelGrid."""

    grid: VoxelGrid

    def __post_init__(self) -> None:
        data = self.grid.data
        if not np.issubdtype(data.dtype, np.integer):
            if not np.equal(np.mod(data, 1), 0).all():
                raise MaskValueError("label mask contains non-integer values")
        vals = np.unique(data)
        if vals.size and (vals.min() < 0 or vals.max() > 2):
            raise MaskValueError(f"label mask values must be in {{0,1,2}}, got {vals}")
        if data.dtype != np.uint8:
            object.__setattr__(self, "grid", VoxelGrid(data.astype(np.uint8), self.grid.spacing))

    @classmethod
    def from_array(cls, data: np.ndarray, spacing: Spacing) -> "LabelMask":
        return cls(VoxelGrid(np.asarray(data), spacing))

    @property
    def data(self) -> np.ndarray:
        return self.grid.data

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.grid.dims

    @property
    def spacing(self) -> Spacing:
        return self.grid.spacing

    def tumor(self) -> BinaryMask:
        return BinaryMask(VoxelGrid(self.data == 2, self.spacing))

    def liver(self) -> BinaryMask:
        """Liver region including voxels overwritten by tumor label."""
        return BinaryMask(VoxelGrid(self.data >= 1, self.spacing))


@dataclass(frozen=True, eq=False)
class Component:
    """One connected component of a binary mask."""

    mask: BinaryMask
    voxel_count: int


def _structure(connectivity: int) -> np.ndarray:
    if connectivity == 6:
        return ndimage.generate_binary_structure(3, 1)
    if connectivity == 26:
        return ndimage.generate_binary_structure(3, 3)
    raise ValueError(f"connectivity must be 6 or 26, got {connectivity}")


def connected_components(mask: BinaryMask, connectivity: int = 26) -> list[Component]:
    """Split a mask into connected components.

    Components are disjoint, their union is the input foreground, and the
    list is ordered by each component's minimum x-fastest linear index, so
    the result is deterministic for a given input.
    """
    structure = _structure(connectivity)
    data = mask.data
    if not data.any():
        return []
    labels, n = ndimage.label(data, structure=structure)
    flat = labels.ravel(order="F")
    uniq, first = np.unique(flat, return_index=True)
    fg = uniq != 0
    order = np.argsort(first[fg], kind="stable")
    out = []
    for lab in uniq[fg][order]:
        comp = labels == lab
        out.append(Component(BinaryMask(VoxelGrid(comp, mask.spacing)), int(comp.sum())))
    return out


def label_count(mask: BinaryMask, connectivity: int = 26) -> int:
    """Number of connected components, without materializing them."""
    if not mask.data.any():
        return 0
    _, n = ndimage.label(mask.data, structure=_structure(connectivity))
    return int(n)


def ball_structure(radius: int) -> np.ndarray:
    """Euclidean ball structuring element: offsets with ||d||^2 <= r^2."""
    r = int(radius)
    ax = np.arange(-r, r + 1)
    dx, dy, dz = np.meshgrid(ax, ax, ax, indexing="ij")
    return (dx * dx + dy * dy + dz * dz) <= r * r


def _check_radius(mask: BinaryMask, radius_voxels: int) -> int:
    r = int(radius_voxels)
    if r != radius_voxels or r < 1:
        raise ValueError(f"radius_voxels must be a positive integer, got {radius_voxels!r}")
    if r >= min(mask.dims) / 2:
        raise StructureTooLargeError(
            f"ball radius {r} does not fit in grid of dims {mask.dims}"
        )
    return r


def dilate(mask: BinaryMask, radius_voxels: int) -> BinaryMask:
    """Binary dilation with a Euclidean ball; output is a superset of the input."""
    r = _check_radius(mask, radius_voxels)
    out = ndimage.binary_dilation(mask.data, structure=ball_structure(r))
    return BinaryMask(VoxelGrid(out, mask.spacing))


def erode(mask: BinaryMask, radius_voxels: int) -> BinaryMask:
    """Binary erosion with a Euclidean ball; output is a subset of the input.

    The region outside the grid counts as foreground (border_value=1) so that
    erode/dilate form an adjunction on the finite grid:
    ``erode(dilate(m, r), r) >= m`` for every mask.
    """
    r = _check_radius(mask, radius_voxels)
    out = ndimage.binary_erosion(mask.data, structure=ball_structure(r), border_value=1)
    return BinaryMask(VoxelGrid(out, mask.spacing))


def warp_by_displacement(
    volume: VoxelGrid, field: np.ndarray, interpolation: str = "trilinear"
) -> VoxelGrid:
    """Backward-warp a volume: ``out(x) = volume(x + field(x))``.

    ``field`` has shape ``dims + (3,)`` holding per-voxel displacements in
    voxel units. Out-of-bounds samples clamp to the nearest in-bounds voxel.
    A zero field reproduces the input bit-exactly in both modes.
    """
    field = np.asarray(field, dtype=np.float32)
    if field.shape != (*volume.dims, 3):
        raise ShapeMismatchError(
            f"field shape {field.shape} does not match volume dims {volume.dims} + (3,)"
        )
    if interpolation == "nearest":
        order = 0
    elif interpolation == "trilinear":
        order = 1
    else:
        raise ValueError(f"interpolation must be 'nearest' or 'trilinear', got {interpolation!r}")
    coords = np.indices(volume.dims, dtype=np.float32)
    coords += np.moveaxis(field, -1, 0)
    out = ndimage.map_coordinates(volume.data, coords, order=order, mode="nearest")
    return VoxelGrid(out, volume.spacing)


def bounding_slices(data: np.ndarray) -> tuple[slice, slice, slice]:
    """Tight bounding box of the foreground as index slices."""
    if not data.any():
        raise EmptyMaskError("cannot take bounding box of an empty mask")
    slices = ndimage.find_objects(data.astype(np.uint8))[0]
    return slices


def grow_slices(
    slices: tuple[slice, ...], margin: int, dims: tuple[int, ...]
) -> tuple[slice, ...]:
    """Grow box slices by ``margin`` voxels per side, clipped to the grid."""
    return tuple(
        slice(max(0, s.start - margin), min(d, s.stop + margin))
        for s, d in zip(slices, dims)
    )

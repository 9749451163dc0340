"""Synthetic host phantoms: ellipsoidal "livers" in noise, plus obstacles.

Used by the test suite and handy for demos when no clinical volumes are at
hand: a contrast-enhanced-looking parenchyma blob (N(90, 5) HU by default)
on a darker background, optionally with a bright vessel-like tube or a slab
obstacle for placement experiments.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .core import BinaryMask, VoxelGrid, bounding_slices
from .dataset import PoolEntry
from .niftiio import CtVolume, write_mask, write_volume


def make_liver_phantom(
    dims=(64, 64, 64),
    spacing=(1.0, 1.0, 1.0),
    *,
    liver_semiaxes_vox=None,
    parenchyma_mean: float = 90.0,
    parenchyma_std: float = 5.0,
    background_hu: float = -80.0,
    seed: int = 0,
) -> tuple[CtVolume, BinaryMask]:
    """An ellipsoidal liver blob with noisy parenchyma on a dark background."""
    dims = tuple(int(d) for d in dims)
    if liver_semiaxes_vox is None:
        liver_semiaxes_vox = tuple(0.38 * d for d in dims)
    rng = np.random.default_rng(seed)
    centers = [(d - 1) / 2.0 for d in dims]
    ax = [
        ((np.arange(d, dtype=np.float64) - c) / s) ** 2
        for d, c, s in zip(dims, centers, liver_semiaxes_vox)
    ]
    q = ax[0][:, None, None] + ax[1][None, :, None] + ax[2][None, None, :]
    liver = q <= 1.0
    data = np.full(dims, background_hu, dtype=np.float32)
    data[liver] = rng.normal(parenchyma_mean, parenchyma_std, size=int(liver.sum())).astype(
        np.float32
    )
    return (
        CtVolume(VoxelGrid(data, spacing)),
        BinaryMask(VoxelGrid(liver, spacing)),
    )


def add_tube(
    volume: CtVolume,
    liver: BinaryMask,
    *,
    axis: int = 0,
    radius_vox: float = 2.0,
    delta_hu: float = 200.0,
) -> tuple[CtVolume, BinaryMask]:
    """Run a bright cylinder through the liver center along an axis.

    Returns the modified volume and the tube mask (restricted to the liver).
    """
    dims = volume.dims
    box = bounding_slices(liver.data)
    center = [(s.start + s.stop - 1) / 2.0 for s in box]
    other = [i for i in range(3) if i != axis]
    coords = np.indices(dims, dtype=np.float64)
    r2 = (coords[other[0]] - center[other[0]]) ** 2 + (coords[other[1]] - center[other[1]]) ** 2
    tube = (r2 <= radius_vox**2) & liver.data
    data = volume.data.copy()
    data[tube] += np.float32(delta_hu)
    return (
        CtVolume(VoxelGrid(data, volume.spacing), affine=volume.affine),
        BinaryMask(VoxelGrid(tube, volume.spacing)),
    )


def slab_obstacle(liver: BinaryMask, *, axis: int = 0, thickness: int = 3) -> BinaryMask:
    """A slab through the middle of the liver, as a placement obstacle."""
    box = bounding_slices(liver.data)
    mid = (box[axis].start + box[axis].stop) // 2
    half = max(1, thickness // 2)
    slab = np.zeros(liver.dims, dtype=bool)
    sel = [slice(None)] * 3
    sel[axis] = slice(max(0, mid - half), min(liver.dims[axis], mid + half + 1))
    slab[tuple(sel)] = True
    return BinaryMask(VoxelGrid(slab & liver.data, liver.spacing))


def write_phantom_pool(
    out_dir: str | Path,
    n: int,
    *,
    dims=(64, 64, 64),
    spacing=(1.0, 1.0, 1.0),
    seed: int = 0,
    size_jitter: float = 0.08,
) -> Path:
    """Write ``n`` phantom volume/liver pairs plus a pool.json index.

    Liver semi-axes get a small per-phantom jitter so the pool is not a
    single repeated geometry.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for i in range(n):
        rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        scale = 1.0 + rng.uniform(-size_jitter, size_jitter, size=3)
        semis = tuple(0.38 * d * s for d, s in zip(dims, scale))
        volume, liver = make_liver_phantom(
            dims, spacing, liver_semiaxes_vox=semis, seed=seed * 100003 + i
        )
        vid = f"phantom_{i:03d}"
        vol_name = f"{vid}_volume.nii.gz"
        liv_name = f"{vid}_liver.nii.gz"
        write_volume(volume, out_dir / vol_name)
        write_mask(liver, out_dir / liv_name)
        entries.append({"id": vid, "volume": vol_name, "liver": liv_name})
    pool_path = out_dir / "pool.json"
    pool_path.write_text(json.dumps({"entries": entries}, indent=2, sort_keys=True) + "\n")
    return pool_path


def in_memory_pool(
    n: int,
    *,
    dims=(64, 64, 64),
    spacing=(1.0, 1.0, 1.0),
    seed: int = 0,
    size_jitter: float = 0.08,
) -> list[PoolEntry]:
    """Same phantoms as write_phantom_pool but kept in memory."""
    entries = []
    for i in range(n):
        rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        scale = 1.0 + rng.uniform(-size_jitter, size_jitter, size=3)
        semis = tuple(0.38 * d * s for d, s in zip(dims, scale))
        volume, liver = make_liver_phantom(
            dims, spacing, liver_semiaxes_vox=semis, seed=seed * 100003 + i
        )
        entries.append(PoolEntry(id=f"phantom_{i:03d}", volume=volume, liver=liver))
    return entries

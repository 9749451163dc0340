"""NIfTI-1 volume/mask I/O and CT intensity preprocessing.

The codec handles single-file NIfTI-1 only (``.nii`` or gzipped ``.nii.gz``),
little-endian, datatypes uint8 / int16 / float32. Header fields consumed:
``dim[0..3]``, ``pixdim[1..3]``, ``datatype``, ``scl_slope`` / ``scl_inter``
(applied on read). The affine (srow or pixdim fallback) is recorded but no
resampling or reorientation is ever performed. Round-trips are bit-exact
for supported datatypes; gzip output is deterministic (mtime pinned to 0).
"""
from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import BinaryMask, LabelMask, VoxelGrid
from .errors import (
    CorruptHeaderError,
    InvalidGeometryError,
    NiftiError,
    UnsupportedFormatError,
    ZeroVarianceError,
)

HU_MIN = -1024.0
HU_MAX = 3071.0

_HEADER = struct.Struct("<i10s18sihcc8h3fhhhh8ffffhcc4f2i80s24s2h6f12f16s4s")
assert _HEADER.size == 348

# NIfTI-1 datatype codes for the supported subset.
_DTYPES = {2: np.dtype("<u1"), 4: np.dtype("<i2"), 16: np.dtype("<f4")}
_CODES = {np.dtype("uint8"): (2, 8), np.dtype("int16"): (4, 16), np.dtype("float32"): (16, 32)}

GZIP_LEVEL = 1  # large noisy volumes barely compress; favor speed


@dataclass(frozen=True, eq=False)
class CtVolume:
    """A CT volume in Hounsfield Units, clamped to [-1024, 3071] on load."""

    grid: VoxelGrid
    unit: str = "HU"
    affine: np.ndarray | None = None

    @property
    def data(self) -> np.ndarray:
        return self.grid.data

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.grid.dims

    @property
    def spacing(self) -> tuple[float, float, float]:
        return self.grid.spacing


@dataclass(frozen=True)
class PreprocessParams:
    """Intensity window clipping followed by optional z-normalization."""

    clip_min: float = -21.0
    clip_max: float = 189.0
    normalize: bool = True

    def __post_init__(self) -> None:
        if not self.clip_min < self.clip_max:
            raise ValueError(f"clip_min must be < clip_max, got [{self.clip_min}, {self.clip_max}]")


def _read_bytes(path: str | Path) -> bytes:
    path = Path(path)
    if not path.is_file():
        raise NiftiError(f"no such file: {path}")
    raw = path.read_bytes()
    if raw[:2] == b"\x1f\x8b":
        try:
            return gzip.decompress(raw)
        except (OSError, EOFError) as exc:
            raise CorruptHeaderError(f"{path}: invalid gzip container: {exc}") from exc
    return raw


def read_grid(path: str | Path) -> tuple[VoxelGrid, np.ndarray]:
    """Read a NIfTI-1 file into a grid; returns (grid, affine)."""
    buf = _read_bytes(path)
    if len(buf) < _HEADER.size:
        raise CorruptHeaderError(f"{path}: file shorter than the 348-byte header")
    f = _HEADER.unpack(buf[: _HEADER.size])
    sizeof_hdr, dim, pixdim = f[0], f[7:15], f[22:30]
    datatype, vox_offset = f[19], f[30]
    scl_slope, scl_inter = f[31], f[32]
    sform_code, srow = f[45], f[52:64]
    magic = f[65]
    if sizeof_hdr != 348:
        raise CorruptHeaderError(
            f"{path}: sizeof_hdr is {sizeof_hdr}, not 348 (not little-endian NIfTI-1?)"
        )
    if magic == b"ni1\x00":
        raise UnsupportedFormatError(f"{path}: two-file .hdr/.img pairs are not supported")
    if magic != b"n+1\x00":
        raise CorruptHeaderError(f"{path}: bad magic {magic!r}")
    ndim = dim[0]
    if ndim < 3 or ndim > 7:
        raise UnsupportedFormatError(f"{path}: dim[0]={ndim}, need a 3D volume")
    if any(d > 1 for d in dim[4 : ndim + 1]):
        raise UnsupportedFormatError(f"{path}: multi-frame/time-series volumes are not supported")
    nx, ny, nz = (int(d) for d in dim[1:4])
    if min(nx, ny, nz) <= 0:
        raise InvalidGeometryError(f"{path}: non-positive dims {(nx, ny, nz)}")
    spacing = tuple(float(p) for p in pixdim[1:4])
    if any(not np.isfinite(s) or s <= 0 for s in spacing):
        raise InvalidGeometryError(f"{path}: non-positive pixdim {spacing}")
    if datatype not in _DTYPES:
        raise UnsupportedFormatError(
            f"{path}: datatype code {datatype} not in supported set {sorted(_DTYPES)}"
        )
    dtype = _DTYPES[datatype]
    offset = int(round(vox_offset))
    if offset < 348:
        raise CorruptHeaderError(f"{path}: vox_offset {vox_offset} < 348")
    nbytes = nx * ny * nz * dtype.itemsize
    if len(buf) < offset + nbytes:
        raise CorruptHeaderError(f"{path}: truncated data section")
    data = np.frombuffer(buf, dtype=dtype, count=nx * ny * nz, offset=offset)
    data = data.reshape((nx, ny, nz), order="F")
    if (
        np.isfinite(scl_slope)
        and np.isfinite(scl_inter)
        and scl_slope != 0.0  # slope 0 means "no scaling" per the format
        and (scl_slope != 1.0 or scl_inter != 0.0)
    ):
        data = data.astype(np.float32) * np.float32(scl_slope) + np.float32(scl_inter)
    if sform_code > 0:
        affine = np.eye(4)
        affine[:3, :] = np.asarray(srow, dtype=float).reshape(3, 4)
    else:
        affine = np.diag((*spacing, 1.0))
    return VoxelGrid(data, spacing), affine


def read_volume(path: str | Path) -> CtVolume:
    """Read a CT volume; values are clamped into the valid HU range."""
    grid, affine = read_grid(path)
    data = np.clip(grid.data, HU_MIN, HU_MAX)
    return CtVolume(VoxelGrid(data, grid.spacing), affine=affine)


def read_mask(path: str | Path) -> LabelMask:
    """Read a label mask; values must lie in {0, 1, 2}."""
    grid, _ = read_grid(path)
    return LabelMask(grid)


def write_grid(grid: VoxelGrid, path: str | Path, affine: np.ndarray | None = None) -> None:
    """Write a grid as single-file NIfTI-1; gzip when the path ends in .gz."""
    data = grid.data
    dtype = np.dtype(data.dtype)
    if dtype not in _CODES:
        data = data.astype(np.float32)
        dtype = np.dtype(np.float32)
    code, bitpix = _CODES[dtype]
    nx, ny, nz = grid.dims
    if affine is None:
        affine = np.diag((*grid.spacing, 1.0))
    srow = np.asarray(affine, dtype=np.float32)[:3, :].reshape(12)
    header = _HEADER.pack(
        348,
        b"", b"", 0, 0, b"r", b"\x00",
        3, nx, ny, nz, 1, 1, 1, 1,
        0.0, 0.0, 0.0, 0,
        code, bitpix, 0,
        1.0, *grid.spacing, 0.0, 0.0, 0.0, 0.0,
        352.0, 1.0, 0.0,
        0, b"\x00", b"\x02",  # xyzt_units: mm
        0.0, 0.0, 0.0, 0.0, 0, 0,
        b"", b"", 0, 1,
        0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
        *srow.tolist(),
        b"", b"n+1\x00",
    )
    payload = data.astype(dtype.newbyteorder("<"), copy=False).tobytes(order="F")
    blob = header + b"\x00\x00\x00\x00" + payload
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix == ".gz":
        with open(path, "wb") as fh:
            # pin mtime and drop the embedded name so identical content
            # always gives identical bytes
            with gzip.GzipFile(
                filename="", fileobj=fh, mode="wb", compresslevel=GZIP_LEVEL, mtime=0
            ) as gz:
                gz.write(blob)
    else:
        path.write_bytes(blob)


def write_volume(volume: CtVolume, path: str | Path) -> None:
    write_grid(volume.grid, path, affine=volume.affine)


def write_mask(mask: LabelMask | BinaryMask, path: str | Path) -> None:
    data = mask.grid.data
    write_grid(VoxelGrid(data.astype(np.uint8), mask.grid.spacing), path)


def preprocess(volume: CtVolume, params: PreprocessParams) -> VoxelGrid:
    """Clip to the HU window; optionally normalize to zero mean, unit std.

    Raises ZeroVarianceError when normalization is requested on a volume
    that is constant after clipping.
    """
    data = np.clip(volume.data.astype(np.float32), params.clip_min, params.clip_max)
    if params.normalize:
        mean = float(data.mean())
        std = float(data.std())
        if std == 0.0:
            raise ZeroVarianceError("cannot normalize a constant volume (zero variance)")
        data = (data - mean) / std
    return VoxelGrid(data, volume.spacing)

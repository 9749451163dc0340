import gzip
import struct

import numpy as np
import pytest

from ctsynth.core import VoxelGrid
from ctsynth.errors import (
    CorruptHeaderError,
    InvalidGeometryError,
    NiftiError,
    UnsupportedFormatError,
    ZeroVarianceError,
)
from ctsynth.niftiio import (
    CtVolume,
    PreprocessParams,
    preprocess,
    read_grid,
    read_mask,
    read_volume,
    write_grid,
)


def random_grid(rng, dtype, dims=(16, 16, 16), spacing=(1.0, 1.0, 1.0)):
    if np.issubdtype(np.dtype(dtype), np.integer):
        info = np.iinfo(dtype)
        lo, hi = max(info.min, -1024), min(info.max, 3071)
        data = rng.integers(lo, hi + 1, size=dims).astype(dtype)
    else:
        data = rng.normal(0, 300, size=dims).astype(dtype)
    return VoxelGrid(data, spacing)


class TestRoundTrip:
    @pytest.mark.parametrize("dtype", [np.int16, np.uint8, np.float32])
    @pytest.mark.parametrize("suffix", [".nii", ".nii.gz"])
    def test_bit_exact(self, tmp_path, dtype, suffix):
        rng = np.random.default_rng(hash(str(dtype)) % 2**32)
        grid = random_grid(rng, dtype)
        path = tmp_path / f"vol{suffix}"
        write_grid(grid, path)
        back, _ = read_grid(path)
        assert back.data.dtype == np.dtype(dtype)
        assert np.array_equal(back.data, grid.data)
        assert back.spacing == grid.spacing

    def test_property_many_random_volumes(self, tmp_path):
        rng = np.random.default_rng(99)
        for i in range(10):
            dims = tuple(int(d) for d in rng.integers(3, 12, 3))
            grid = random_grid(rng, np.int16, dims=dims, spacing=tuple(rng.uniform(0.5, 4, 3)))
            path = tmp_path / f"v{i}.nii.gz"
            write_grid(grid, path)
            back, _ = read_grid(path)
            assert np.array_equal(back.data, grid.data)
            assert np.allclose(back.spacing, grid.spacing, atol=1e-6)

    def test_spacing_mapping(self, tmp_path):
        grid = VoxelGrid(np.zeros((4, 5, 6), np.int16), (1.5, 1.5, 3.0))
        path = tmp_path / "anisotropic.nii"
        write_grid(grid, path)
        back, _ = read_grid(path)
        assert back.spacing == (1.5, 1.5, 3.0)

    def test_gzip_output_is_deterministic(self, tmp_path):
        grid = random_grid(np.random.default_rng(1), np.float32)
        a, b = tmp_path / "a.nii.gz", tmp_path / "b.nii.gz"
        write_grid(grid, a)
        write_grid(grid, b)
        assert a.read_bytes() == b.read_bytes()


class TestErrors:
    def test_missing_file(self, tmp_path):
        with pytest.raises(NiftiError):
            read_grid(tmp_path / "nope.nii")

    def test_truncated_header(self, tmp_path):
        p = tmp_path / "short.nii"
        p.write_bytes(b"\x00" * 100)
        with pytest.raises(CorruptHeaderError):
            read_grid(p)

    def test_truncated_data(self, tmp_path):
        grid = VoxelGrid(np.zeros((8, 8, 8), np.int16), (1, 1, 1))
        p = tmp_path / "cut.nii"
        write_grid(grid, p)
        p.write_bytes(p.read_bytes()[:-50])
        with pytest.raises(CorruptHeaderError):
            read_grid(p)

    def test_bad_magic(self, tmp_path):
        grid = VoxelGrid(np.zeros((4, 4, 4), np.int16), (1, 1, 1))
        p = tmp_path / "bad.nii"
        write_grid(grid, p)
        raw = bytearray(p.read_bytes())
        raw[344:348] = b"XXX\x00"
        p.write_bytes(bytes(raw))
        with pytest.raises(CorruptHeaderError):
            read_grid(p)

    def test_unsupported_datatype(self, tmp_path):
        grid = VoxelGrid(np.zeros((4, 4, 4), np.int16), (1, 1, 1))
        p = tmp_path / "f64.nii"
        write_grid(grid, p)
        raw = bytearray(p.read_bytes())
        struct.pack_into("<h", raw, 70, 64)  # float64 datatype code
        p.write_bytes(bytes(raw))
        with pytest.raises(UnsupportedFormatError):
            read_grid(p)

    def test_nonpositive_pixdim(self, tmp_path):
        grid = VoxelGrid(np.zeros((4, 4, 4), np.int16), (1, 1, 1))
        p = tmp_path / "pix.nii"
        write_grid(grid, p)
        raw = bytearray(p.read_bytes())
        struct.pack_into("<f", raw, 80, -1.0)  # pixdim[1]
        p.write_bytes(bytes(raw))
        with pytest.raises(InvalidGeometryError):
            read_grid(p)

    def test_corrupt_gzip(self, tmp_path):
        p = tmp_path / "bad.nii.gz"
        p.write_bytes(b"\x1f\x8b" + b"garbage" * 10)
        with pytest.raises(CorruptHeaderError):
            read_grid(p)

    def test_two_file_form_rejected(self, tmp_path):
        grid = VoxelGrid(np.zeros((4, 4, 4), np.int16), (1, 1, 1))
        p = tmp_path / "pair.nii"
        write_grid(grid, p)
        raw = bytearray(p.read_bytes())
        raw[344:348] = b"ni1\x00"
        p.write_bytes(bytes(raw))
        with pytest.raises(UnsupportedFormatError):
            read_grid(p)


class TestScaling:
    def test_scl_slope_applied(self, tmp_path):
        grid = VoxelGrid(np.arange(27, dtype=np.int16).reshape(3, 3, 3), (1, 1, 1))
        p = tmp_path / "scaled.nii"
        write_grid(grid, p)
        raw = bytearray(p.read_bytes())
        struct.pack_into("<f", raw, 112, 2.0)  # scl_slope
        struct.pack_into("<f", raw, 116, 10.0)  # scl_inter
        p.write_bytes(bytes(raw))
        back, _ = read_grid(p)
        assert back.data.dtype == np.float32
        assert np.allclose(back.data, grid.data.astype(np.float32) * 2 + 10)


class TestCtVolume:
    def test_load_clamps_hu_range(self, tmp_path):
        data = np.array([[[-2000, 0, 5000]]], dtype=np.float32).reshape(3, 1, 1)
        p = tmp_path / "wild.nii"
        write_grid(VoxelGrid(data, (1, 1, 1)), p)
        vol = read_volume(p)
        assert vol.data.min() >= -1024
        assert vol.data.max() <= 3071

    def test_mask_value_validation(self, tmp_path):
        p = tmp_path / "labels.nii"
        write_grid(VoxelGrid(np.full((3, 3, 3), 7, np.uint8), (1, 1, 1)), p)
        from ctsynth.errors import MaskValueError

        with pytest.raises(MaskValueError):
            read_mask(p)


class TestPreprocess:
    def vol(self, values):
        data = np.asarray(values, np.float32).reshape(-1, 1, 1)
        return CtVolume(VoxelGrid(data, (1, 1, 1)))

    def test_clip_examples(self):
        params = PreprocessParams(normalize=False)
        out = preprocess(self.vol([500.0, -1000.0, 84.0]), params)
        assert out.data.ravel().tolist() == [189.0, -21.0, 84.0]

    def test_normalize_three_values(self):
        # direct formula: mean 84, population std sqrt(7350)
        out = preprocess(self.vol([-21.0, 84.0, 189.0]), PreprocessParams())
        assert abs(out.data.mean()) < 1e-5
        assert abs(out.data.std() - 1.0) < 1e-5
        expected = (np.array([-21.0, 84.0, 189.0]) - 84.0) / np.sqrt(7350.0)
        assert np.allclose(out.data.ravel(), expected, atol=1e-6)

    def test_zero_variance_error(self):
        with pytest.raises(ZeroVarianceError):
            preprocess(self.vol([50.0, 50.0, 50.0]), PreprocessParams(normalize=True))

    def test_idempotent_without_normalize(self):
        params = PreprocessParams(normalize=False)
        first = preprocess(self.vol([500.0, -1000.0, 84.0]), params)
        second = preprocess(CtVolume(first), params)
        assert np.array_equal(first.data, second.data)

    def test_bad_window_rejected(self):
        with pytest.raises(ValueError):
            PreprocessParams(clip_min=10, clip_max=-10)

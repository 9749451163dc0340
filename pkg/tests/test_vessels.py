import numpy as np
import pytest

from ctsynth.core import BinaryMask, VoxelGrid
from ctsynth.errors import EmptyMaskError, ShapeMismatchError
from ctsynth.niftiio import CtVolume
from ctsynth.phantom import add_tube, make_liver_phantom
from ctsynth.vessels import VesselParams, segment_vessels, vessel_threshold


@pytest.fixture(scope="module")
def tube_phantom():
    volume, liver = make_liver_phantom((48, 48, 48), seed=21)
    volume, tube = add_tube(volume, liver, axis=0, radius_vox=2.0, delta_hu=200.0)
    return volume, liver, tube


def test_constant_liver_relative_mode_empty():
    data = np.full((16, 16, 16), 90.0, np.float32)
    liver = np.zeros((16, 16, 16), bool)
    liver[4:12, 4:12, 4:12] = True
    volume = CtVolume(VoxelGrid(data, (1, 1, 1)))
    out = segment_vessels(volume, BinaryMask(VoxelGrid(liver, (1, 1, 1))), VesselParams())
    assert out.count == 0


def test_tube_phantom_recovery(tube_phantom):
    volume, liver, tube = tube_phantom
    out = segment_vessels(volume, liver, VesselParams(k_sigma=2.0))
    recovered = (out.data & tube.data).sum() / tube.count
    false_pos = int((out.data & ~tube.data).sum())
    assert recovered >= 0.90
    assert false_pos == 0


def test_absolute_above_max_empty(tube_phantom):
    volume, liver, _ = tube_phantom
    params = VesselParams(mode="absolute", absolute_hu=float(volume.data.max()) + 1)
    assert segment_vessels(volume, liver, params).count == 0


def test_output_subset_of_liver(tube_phantom):
    volume, liver, _ = tube_phantom
    out = segment_vessels(volume, liver, VesselParams(min_component_voxels=0))
    assert np.all(liver.data[out.data])


def test_monotone_in_k_sigma(tube_phantom):
    volume, liver, _ = tube_phantom
    loose = segment_vessels(volume, liver, VesselParams(k_sigma=1.0, min_component_voxels=0))
    tight = segment_vessels(volume, liver, VesselParams(k_sigma=3.0, min_component_voxels=0))
    assert np.all(loose.data[tight.data])  # tight is a subset of loose


def test_small_component_removal(tube_phantom):
    volume, liver, tube = tube_phantom
    with_removal = segment_vessels(volume, liver, VesselParams(min_component_voxels=20))
    without = segment_vessels(volume, liver, VesselParams(min_component_voxels=0))
    assert with_removal.count <= without.count
    assert np.all(without.data[with_removal.data])


def test_empty_liver_error():
    volume = CtVolume(VoxelGrid(np.zeros((8, 8, 8), np.float32), (1, 1, 1)))
    empty = BinaryMask(VoxelGrid(np.zeros((8, 8, 8), bool), (1, 1, 1)))
    with pytest.raises(EmptyMaskError):
        segment_vessels(volume, empty, VesselParams())


def test_dim_mismatch_error():
    volume = CtVolume(VoxelGrid(np.zeros((8, 8, 8), np.float32), (1, 1, 1)))
    liver = BinaryMask(VoxelGrid(np.ones((8, 8, 9), bool), (1, 1, 1)))
    with pytest.raises(ShapeMismatchError):
        segment_vessels(volume, liver, VesselParams())


def test_threshold_formula(tube_phantom):
    volume, liver, _ = tube_phantom
    params = VesselParams(k_sigma=2.0)
    vals = volume.data[liver.data]
    assert vessel_threshold(volume, liver, params) == pytest.approx(
        float(vals.mean() + 2.0 * vals.std())
    )


def test_param_validation():
    with pytest.raises(ValueError):
        VesselParams(mode="fancy")
    with pytest.raises(ValueError):
        VesselParams(k_sigma=0.0)
    with pytest.raises(ValueError):
        VesselParams(mode="absolute")  # missing absolute_hu

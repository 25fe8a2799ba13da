import math

import numpy as np
import pytest

from _oracles import cone_voxel_count
from graspable.exceptions import ValidationError
from graspable.gripper_mask import GripperMask, GripperParams, create_gripper_mask, mask_volume


def test_cylinder_when_angles_equal():
    M = create_gripper_mask(GripperParams(30.0, 20.0, (10.0, 10.0)), 2.0)
    d = M.dense()
    for k in range(d.shape[2]):
        assert np.array_equal(d[:, :, k], d[:, :, -1])


@pytest.mark.parametrize("params,c", [
    (GripperParams(30.0, 24.0, (0.0, 45.0)), 2.0),
    (GripperParams(40.0, 60.0, (0.0, 30.0)), 10.0),
    (GripperParams(17.0, 33.0, (5.0, 70.0), 4.0), 3.0),
])
def test_rotation_symmetry(params, c):
    d = create_gripper_mask(params, c).dense()
    assert np.array_equal(d, np.rot90(d, 1, axes=(0, 1)))
    assert np.array_equal(d, d[::-1, :, :]) and np.array_equal(d, d[:, ::-1, :])


def test_count_against_cone_oracle():
    M = create_gripper_mask(GripperParams(40.0, 60.0, (0.0, 30.0)), 10.0)
    assert mask_volume(M) == cone_voxel_count(40.0, 60.0, 0.0, 30.0, 0.0, 10.0)
    assert mask_volume(M) == M.dense().sum()


@pytest.mark.parametrize("palm,finger,lo,hi,clear,c", [
    (30.0, 24.0, 0.0, 45.0, 0.0, 2.0),
    (25.0, 50.0, 20.0, 35.0, 5.0, 3.0),
    (12.0, 8.0, 0.0, 0.0, 0.0, 1.0),
])
def test_more_shapes_against_oracle(palm, finger, lo, hi, clear, c):
    M = create_gripper_mask(GripperParams(palm, finger, (lo, hi), clear), c)
    assert mask_volume(M) == cone_voxel_count(palm, finger, lo, hi, clear, c)


def test_bounding_box_and_pivot():
    p = GripperParams(40.0, 60.0, (0.0, 30.0))
    M = create_gripper_mask(p, 10.0)
    d = M.dense()
    i, j, k = M.shape
    assert i % 2 == 1 and j % 2 == 1
    assert M.pivot == (i // 2, j // 2, k - 1)
    assert d[M.pivot]
    # tight box: outer rows and the bottom layer are used
    assert d[0].any() and d[-1].any() and d[:, 0].any() and d[:, :, 0].any()
    assert k == math.floor(p.depth / 10.0) + 1


def test_top_layer_is_palm_disc():
    M = create_gripper_mask(GripperParams(30.0, 24.0, (0.0, 45.0)), 2.0)
    top = M.dense()[:, :, -1]
    h = M.pivot[0]
    a, b = np.nonzero(top)
    assert ((a - h) ** 2 + (b - h) ** 2 <= 7.5 ** 2 + 1e-9).all()
    assert top.sum() == sum(1 for x in range(-8, 9) for y in range(-8, 9) if x * x + y * y <= 56.25)


@pytest.mark.parametrize("params", [
    GripperParams(40.0, 60.0, (0.0, 30.0)),
    GripperParams(30.0, 24.0, (0.0, 45.0)),
    GripperParams(40.0, 30.0, (0.0, 25.0)),
])
@pytest.mark.parametrize("fraction", [20, 40])
def test_volume_converges_to_frustum(params, fraction):
    c = params.palm_diameter / fraction
    M = create_gripper_mask(params, c)
    assert abs(mask_volume(M) * c ** 3 / params.volume() - 1) < 0.10


def test_frustum_volume_formula():
    p = GripperParams(40.0, 30.0, (0.0, 25.0))
    r1 = 20.0 + 30.0 * math.tan(math.radians(25.0))
    assert math.isclose(p.volume(), math.pi * 30.0 / 3 * (400.0 + 20.0 * r1 + r1 * r1), rel_tol=1e-12)


def test_halving_c_scales_count():
    p = GripperParams(30.0, 24.0, (0.0, 45.0))
    n2, n1 = mask_volume(create_gripper_mask(p, 2.0)), mask_volume(create_gripper_mask(p, 1.0))
    assert 4 * n2 <= n1 <= 8 * n2


def test_monotone_in_angle_and_length():
    c = 2.0
    base = create_gripper_mask(GripperParams(30.0, 24.0, (0.0, 30.0)), c).dense()
    for bigger in (GripperParams(30.0, 24.0, (0.0, 40.0)), GripperParams(30.0, 30.0, (0.0, 30.0))):
        d = create_gripper_mask(bigger, c).dense()
        # align on the pivot (top-centre) before comparing
        di = (d.shape[0] - base.shape[0]) // 2
        dk = d.shape[2] - base.shape[2]
        sub = d[di:di + base.shape[0], di:di + base.shape[1], dk:]
        assert (sub | base).tolist() == sub.tolist()


def test_params_validation():
    with pytest.raises(ValidationError):
        GripperParams(0.0, 10.0)
    with pytest.raises(ValidationError):
        GripperParams(10.0, -1.0)
    with pytest.raises(ValidationError):
        GripperParams(10.0, 10.0, (30.0, 10.0))
    with pytest.raises(ValidationError):
        GripperParams(10.0, 10.0, (0.0, 90.0))
    with pytest.raises(ValidationError):
        GripperParams(10.0, 10.0, (0.0, 30.0), -1.0)
    with pytest.raises(ValidationError):
        create_gripper_mask(GripperParams(10.0, 10.0), 10.0)
    with pytest.raises(ValidationError):
        create_gripper_mask(GripperParams(10.0, 10.0), 0.0)


def test_custom_masks_and_dump_round_trip():
    M = GripperMask.from_dense(np.ones((1, 1, 1)), 2.0)
    assert mask_volume(M) == 1 and M.pivot == (0, 0, 0)
    with pytest.raises(ValidationError):
        GripperMask.from_dense(np.ones((2, 3, 1)), 2.0)
    with pytest.raises(ValidationError):
        GripperMask.from_dense(np.zeros((3, 3, 1)), 2.0)
    cone = create_gripper_mask(GripperParams(30.0, 24.0, (0.0, 45.0)), 2.0)
    back = GripperMask.from_bytes(cone.to_bytes())
    assert back.occupancy == cone.occupancy and back.pivot == cone.pivot
    assert back.voxel_size_mm == 2.0


def test_terrain_dump_is_not_a_mask():
    from graspable.terrain import TerrainArray

    data = TerrainArray.from_dense(np.ones((3, 3, 3)), 2.0).to_bytes()
    with pytest.raises(ValidationError):
        GripperMask.from_bytes(data)

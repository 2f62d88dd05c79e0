"""
Tests for the pinhole camera, yaw rotations and projection.
"""
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from geometry.camera import (
    CameraIntrinsics, Pose, normalize_angle, project_camera_points, project_point, project_shape, rotation_y,
    yaw_from_rotation,
)
from utils.errors import DegenerateDepth, ValidationError

K = CameraIntrinsics(fx=700.0, fy=700.0, cx=600.0, cy=180.0, img_w=1242, img_h=375)


@pytest.mark.parametrize("yaw", [0.0, 0.7, -2.0, math.pi])
def test_origin_projects_to_principal_point(yaw):
    uv = project_point(K, Pose(yaw, (0, 0, 10)), (0, 0, 0))
    np.testing.assert_allclose(uv, [600.0, 180.0])


def test_project_point_hand_cases():
    np.testing.assert_allclose(project_point(K, Pose(0.0, (0, 0, 10)), (1, 0, 0)), [670.0, 180.0])
    np.testing.assert_allclose(project_point(K, Pose(math.pi, (0, 0, 10)), (1, 0, 0)), [530.0, 180.0], atol=1e-9)


def test_project_point_behind_camera_raises():
    with pytest.raises(DegenerateDepth):
        project_point(K, Pose(0.0, (0, 0, -1)), (0, 0, 0))


def test_project_shape_cube_corners():
    corners = np.array([[sx, sy, sz] for sx in (-0.5, 0.5) for sy in (-0.5, 0.5) for sz in (-0.5, 0.5)])
    uv = project_shape(K, Pose(0.0, (0, 0, 10)), corners)
    z = 10 + corners[:, 2]
    expected = np.column_stack((600 + 700 * corners[:, 0] / z, 180 + 700 * corners[:, 1] / z))
    np.testing.assert_allclose(uv, expected)


def test_project_shape_single_point_matches_project_point():
    pose = Pose(0.3, (1.0, 0.5, 12.0))
    p = np.array([[0.4, -0.2, 0.9]])
    np.testing.assert_allclose(project_shape(K, pose, p)[0], project_point(K, pose, p[0]))


def test_degenerate_depth_carries_part_index():
    pts = np.array([[0, 0, 5.0], [0, 0, 6.0], [0, 0, 0.0]])
    with pytest.raises(DegenerateDepth) as exc:
        project_camera_points(K, pts)
    assert exc.value.index == 2


def test_yaw_periodicity_is_bitwise_after_normalization():
    p = np.array([[1.2, 0.3, -0.7]])
    a = project_shape(K, Pose(0.0, (0, 0, 10)), p)
    b = project_shape(K, Pose(2 * math.pi, (0, 0, 10)), p)
    assert np.array_equal(a, b)


@given(st.floats(min_value=-50, max_value=50, allow_nan=False))
def test_rotation_is_orthonormal(yaw):
    R = rotation_y(yaw)
    np.testing.assert_allclose(R @ R.T, np.eye(3), atol=1e-12)
    assert abs(np.linalg.det(R) - 1.0) < 1e-12


@given(st.floats(min_value=-math.pi + 1e-9, max_value=math.pi, allow_nan=False))
def test_yaw_from_rotation_inverts_rotation_y(yaw):
    assert abs(normalize_angle(yaw_from_rotation(rotation_y(yaw)) - yaw)) < 1e-9


def test_normalize_angle_range():
    assert normalize_angle(-math.pi) == pytest.approx(math.pi)
    assert normalize_angle(2 * math.pi + 0.5) == pytest.approx(0.5)
    assert normalize_angle(0.5) == 0.5


def test_intrinsics_validation_and_scaling():
    with pytest.raises(ValidationError):
        CameraIntrinsics(fx=0.0, fy=1.0, cx=0, cy=0, img_w=10, img_h=10)
    big = K.scaled(4)
    assert (big.img_w, big.img_h) == (4968, 1500)
    assert big.fx == 2800.0 and big.cx == 2400.0
    assert CameraIntrinsics.from_dict(K.to_dict()) == K


def test_in_image_bounds():
    mask = K.in_image(np.array([[0, 0], [1241.9, 374.9], [1242, 10], [-0.1, 10]]))
    assert mask.tolist() == [True, True, False, False]

"""
Tests for EPnP, yaw-constrained Gauss-Newton and the yaw grid oracle.
"""
import math

import numpy as np
import pytest

from geometry.boxes import wrap_angle_difference
from geometry.camera import Pose, project_shape
from services.pose_solver import (
    PnPMode, PnPOptions, refine_yaw_pose, reprojection_error, solve_epnp, solve_pose, solve_pose_oracle,
    yaw_pose_residuals,
)
from utils.errors import DegenerateConfiguration, NonConvergence, ShapeMismatch, ValidationError

YAW_TOL = math.radians(0.1)


@pytest.fixture
def shape(bank):
    return bank[0].shape


def _assert_pose_close(found: Pose, truth: Pose, yaw_tol=YAW_TOL, t_tol=0.01):
    assert abs(wrap_angle_difference(found.yaw, truth.yaw)) < yaw_tol
    assert np.linalg.norm(found.translation - truth.translation) < t_tol


@pytest.mark.parametrize("truth", [Pose(0.5, (1.0, -0.2, 12.0)), Pose(0.0, (0.0, 0.0, 10.0))])
def test_epnp_round_trip(shape, camera, truth):
    solution = solve_epnp(shape, project_shape(camera, truth, shape), camera)
    _assert_pose_close(solution.pose, truth)
    R = solution.rotation_matrix
    np.testing.assert_allclose(R @ R.T, np.eye(3), atol=1e-9)
    assert solution.reproj_rmse < 1e-6


def test_epnp_needs_six_points(shape, camera):
    truth = Pose(0.3, (0.0, 0.5, 15.0))
    with pytest.raises(DegenerateConfiguration):
        solve_epnp(shape[:5], project_shape(camera, truth, shape[:5]), camera)


def test_epnp_rejects_coplanar_points(camera):
    flat = np.array([[x, y, 0.0] for x in (-1.0, 0.0, 1.0) for y in (-1.0, 1.0)])
    with pytest.raises(DegenerateConfiguration):
        solve_epnp(flat, project_shape(camera, Pose(0.2, (0, 0, 10)), flat), camera)


def test_refine_from_truth_is_stationary(shape, camera):
    truth = Pose(-1.2, (2.0, 0.9, 20.0))
    solution = refine_yaw_pose(shape, project_shape(camera, truth, shape), camera, truth)
    assert solution.converged and solution.iterations <= 2
    _assert_pose_close(solution.pose, truth, 1e-9, 1e-9)


def test_refine_from_perturbed_init(shape, camera):
    truth = Pose(0.8, (-1.5, 0.8, 15.0))
    init = Pose(0.8 + math.radians(10.0), (-1.0, 0.8, 15.0))
    solution = refine_yaw_pose(shape, project_shape(camera, truth, shape), camera, init)
    assert solution.converged
    _assert_pose_close(solution.pose, truth, 1e-4, 1e-4)


def test_refine_strict_raises_with_partial_solution(shape, camera):
    truth = Pose(0.8, (-1.5, 0.8, 15.0))
    init = Pose(0.8 + math.radians(10.0), (-1.0, 0.8, 15.0))
    opts = PnPOptions(max_iters=1, strict=True)
    with pytest.raises(NonConvergence) as exc:
        refine_yaw_pose(shape, project_shape(camera, truth, shape), camera, init, opts)
    assert exc.value.solution is not None and not exc.value.solution.converged


def test_jacobian_matches_finite_differences(shape, camera, rng):
    for _ in range(5):
        params = np.array([rng.uniform(-math.pi, math.pi), rng.uniform(-3, 3), rng.uniform(-1, 2),
                           rng.uniform(8, 40)])
        observed = rng.uniform(0, 1242, size=(shape.shape[0], 2))
        _, J = yaw_pose_residuals(params, shape, observed, camera)
        numeric = np.zeros_like(J)
        for j in range(4):
            step = np.zeros(4)
            step[j] = 1e-5
            r_plus, _ = yaw_pose_residuals(params + step, shape, observed, camera)
            r_minus, _ = yaw_pose_residuals(params - step, shape, observed, camera)
            numeric[:, j] = (r_plus - r_minus) / 2e-5
        denom = np.maximum(np.maximum(np.abs(J), np.abs(numeric)), 1e-3)
        assert np.max(np.abs(J - numeric) / denom) < 1e-4


def test_oracle_noiseless_within_grid_resolution(shape, camera):
    truth = Pose(2.1, (0.5, 1.0, 18.0))
    step = math.radians(2.0)
    solution = solve_pose_oracle(shape, project_shape(camera, truth, shape), camera, step)
    assert abs(wrap_angle_difference(solution.pose.yaw, truth.yaw)) <= step / 2
    assert solution.reproj_rmse >= 0.0
    with pytest.raises(ValidationError):
        solve_pose_oracle(shape, project_shape(camera, truth, shape), camera, 0.0)


def test_solver_never_worse_than_oracle_under_noise(bank, camera, rng):
    for trial in range(100):
        model = bank[trial % len(bank)]
        truth = Pose(rng.uniform(-math.pi, math.pi), (rng.uniform(-3, 3), 1.65 - model.template.h / 2, 15.0))
        observed = project_shape(camera, truth, model.shape) + rng.normal(0.0, 1.0, (bank.n_parts, 2))
        solved = solve_pose(model.shape, observed, camera)
        oracle = solve_pose_oracle(model.shape, observed, camera, math.radians(0.5))
        assert solved.reproj_rmse <= oracle.reproj_rmse + 1e-6


def test_yaw_equivariance(shape, camera):
    alpha = 0.7
    base = Pose(0.3, (1.0, 0.6, 14.0))
    turned = Pose(0.3 + alpha, base.t)
    a = solve_pose(shape, project_shape(camera, base, shape), camera)
    b = solve_pose(shape, project_shape(camera, turned, shape), camera)
    assert abs(wrap_angle_difference(b.pose.yaw - a.pose.yaw, alpha)) < YAW_TOL


def test_solve_pose_modes(shape, camera):
    truth = Pose(-2.5, (0.0, 0.7, 25.0))
    observed = project_shape(camera, truth, shape)
    full = solve_pose(shape, observed, camera, PnPOptions(mode="6dof"))
    assert full.rotation is not None
    _assert_pose_close(full.pose, truth)
    # four points: too few for EPnP, the yaw grid seeds the refinement
    few = solve_pose(shape[[0, 7, 13, 26]], observed[[0, 7, 13, 26]], camera)
    _assert_pose_close(few.pose, truth)
    with pytest.raises(DegenerateConfiguration):
        solve_pose(shape[:3], observed[:3], camera)
    with pytest.raises(DegenerateConfiguration):
        solve_pose(shape, np.tile([[600.0, 180.0]], (shape.shape[0], 1)), camera)


def test_options_validation():
    assert PnPOptions(mode="yaw").mode is PnPMode.YAW
    assert PnPOptions(mode="6dof").required_points == 6
    with pytest.raises(ValueError):
        PnPOptions(mode="affine")
    with pytest.raises(ValidationError):
        PnPOptions(max_iters=0)
    with pytest.raises(ValidationError):
        PnPOptions(tol=0.0)


def test_reprojection_error_examples(shape, camera):
    truth = Pose(0.4, (0.0, 0.5, 12.0))
    assert reprojection_error(shape, project_shape(camera, truth, shape), camera, truth) == pytest.approx(0.0, abs=1e-9)
    assert reprojection_error([[0.0, 0.0, 0.0]], [[603.0, 184.0]], camera, Pose(0.0, (0, 0, 10))) == pytest.approx(5.0)
    with pytest.raises(ShapeMismatch):
        reprojection_error(shape, np.zeros((3, 2)), camera, truth)


def test_reprojection_error_grows_with_noise(shape, camera, rng):
    truth = Pose(0.4, (0.0, 0.5, 12.0))
    clean = project_shape(camera, truth, shape)
    small = np.mean([reprojection_error(shape, clean + rng.normal(0, 0.5, clean.shape), camera, truth)
                     for _ in range(20)])
    large = np.mean([reprojection_error(shape, clean + rng.normal(0, 2.0, clean.shape), camera, truth)
                     for _ in range(20)])
    assert small < large

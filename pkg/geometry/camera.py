"""
Pinhole camera model, yaw-only rigid transforms and projection.

Camera frame follows KITTI: x right, y down, z forward. The canonical object
frame has its origin at the 3D box centroid, +x along the heading (length),
+y down (height) and +z to the vehicle's left (width). Yaw rotates about the
camera y axis.
"""
import logging
import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from utils.errors import DegenerateDepth, ValidationError

logger = logging.getLogger(__name__)

MIN_DEPTH = 1e-6


def normalize_angle(angle: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    wrapped = math.remainder(float(angle), 2.0 * math.pi)
    if wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped


def rotation_y(yaw: float) -> np.ndarray:
    """Rotation matrix about the camera y axis (KITTI rotation_y convention)."""
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rotation_y_derivative(yaw: float) -> np.ndarray:
    """d rotation_y / d yaw."""
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[-s, 0.0, c], [0.0, 0.0, 0.0], [-c, 0.0, -s]])


def yaw_from_rotation(R: np.ndarray) -> float:
    """Yaw of the heading column of a rotation matrix (exact for pure yaw rotations)."""
    return normalize_angle(math.atan2(-R[2, 0], R[0, 0]))


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics in pixels plus the image size."""
    fx: float
    fy: float
    cx: float
    cy: float
    img_w: int
    img_h: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValidationError(f"focal lengths must be positive, got fx={self.fx} fy={self.fy}")
        if not (self.img_w > 0 and self.img_h > 0):
            raise ValidationError(f"image size must be positive, got {self.img_w}x{self.img_h}")

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def in_image(self, uv: np.ndarray) -> np.ndarray:
        """Boolean mask of pixel points inside [0, img_w) x [0, img_h)."""
        uv = np.atleast_2d(uv)
        return (uv[:, 0] >= 0) & (uv[:, 0] < self.img_w) & (uv[:, 1] >= 0) & (uv[:, 1] < self.img_h)

    def scaled(self, factor: float) -> "CameraIntrinsics":
        """Intrinsics of the same camera sampled at `factor` times the resolution."""
        return CameraIntrinsics(
            fx=self.fx * factor, fy=self.fy * factor,
            cx=self.cx * factor, cy=self.cy * factor,
            img_w=int(round(self.img_w * factor)), img_h=int(round(self.img_h * factor)),
        )

    def to_dict(self) -> dict:
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
                "img_w": self.img_w, "img_h": self.img_h}

    @classmethod
    def from_dict(cls, data: dict) -> "CameraIntrinsics":
        return cls(fx=float(data["fx"]), fy=float(data["fy"]), cx=float(data["cx"]),
                   cy=float(data["cy"]), img_w=int(data["img_w"]), img_h=int(data["img_h"]))


@dataclass(frozen=True)
class Pose:
    """Yaw plus camera-frame translation (meters)."""
    yaw: float
    t: Tuple[float, float, float]

    def __post_init__(self):
        object.__setattr__(self, "yaw", normalize_angle(self.yaw))
        t = tuple(float(v) for v in self.t)
        if len(t) != 3:
            raise ValidationError(f"translation needs 3 components, got {len(t)}")
        object.__setattr__(self, "t", t)

    @property
    def rotation(self) -> np.ndarray:
        return rotation_y(self.yaw)

    @property
    def translation(self) -> np.ndarray:
        return np.asarray(self.t, dtype=float)

    def transform(self, points: np.ndarray) -> np.ndarray:
        """Map canonical-frame points (N,3) into the camera frame."""
        return np.asarray(points, dtype=float).reshape(-1, 3) @ self.rotation.T + self.translation


def project_camera_points(K: CameraIntrinsics, points_cam: np.ndarray) -> np.ndarray:
    """
    Project camera-frame points to pixels.

    Args:
        K: Camera intrinsics
        points_cam: (N, 3) camera-frame points

    Returns:
        (N, 2) pixel coordinates (may lie outside the image)
    """
    pts = np.asarray(points_cam, dtype=float).reshape(-1, 3)
    bad = np.flatnonzero(pts[:, 2] <= MIN_DEPTH)
    if bad.size:
        idx = int(bad[0])
        raise DegenerateDepth(f"depth {pts[idx, 2]:.3g} m is not in front of the camera", index=idx)
    z = pts[:, 2]
    return np.column_stack((K.fx * pts[:, 0] / z + K.cx, K.fy * pts[:, 1] / z + K.cy))


def project_point(K: CameraIntrinsics, pose: Pose, p: Sequence[float]) -> np.ndarray:
    """Project one canonical-frame point; returns a (2,) pixel vector."""
    X, Y, Z = pose.transform(np.asarray(p, dtype=float))[0]
    if Z <= MIN_DEPTH:
        raise DegenerateDepth(f"depth {Z:.3g} m is not in front of the camera")
    return np.array([K.fx * X / Z + K.cx, K.fy * Y / Z + K.cy])


def project_shape(K: CameraIntrinsics, pose: Pose, shape: np.ndarray) -> np.ndarray:
    """Project an ordered (N,3) canonical shape; part k maps to row k."""
    return project_camera_points(K, pose.transform(shape))

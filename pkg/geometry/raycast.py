"""
Ray/triangle intersection and z-buffer rasterization over camera-frame triangle soups.
"""
import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .camera import MIN_DEPTH, CameraIntrinsics

logger = logging.getLogger(__name__)


def ray_triangle_distances(origin: np.ndarray, direction: np.ndarray, triangles: np.ndarray,
                           eps: float = 1e-12) -> np.ndarray:
    """
    Vectorized Moller-Trumbore test of one ray against many triangles.

    Back faces are not culled, so meshes may be wound either way.

    Args:
        origin: (3,) ray origin
        direction: (3,) ray direction (unit length gives metric distances)
        triangles: (T, 3, 3) vertex coordinates
        eps: determinant threshold for parallel rays

    Returns:
        (T,) ray parameter of each hit, +inf where the ray misses or the hit is behind the origin
    """
    triangles = np.asarray(triangles, dtype=float).reshape(-1, 3, 3)
    if triangles.shape[0] == 0:
        return np.zeros(0)
    with np.errstate(divide='ignore', invalid='ignore'):
        edge1 = triangles[:, 1] - triangles[:, 0]
        edge2 = triangles[:, 2] - triangles[:, 0]
        p = np.cross(direction, edge2)
        det = np.einsum('ij,ij->i', edge1, p)
        inv_det = 1.0 / det
        tvec = origin - triangles[:, 0]
        u = np.einsum('ij,ij->i', tvec, p) * inv_det
        q = np.cross(tvec, edge1)
        v = (q @ direction) * inv_det
        t = np.einsum('ij,ij->i', edge2, q) * inv_det
        miss = (np.abs(det) < eps) | (u < 0) | (u > 1) | (v < 0) | (u + v > 1) | (t <= 0)
    return np.where(miss, np.inf, t)


def nearest_blocker(point: np.ndarray, triangles: np.ndarray, margin: float) -> Tuple[int, float]:
    """
    Nearest triangle hit on the ray from the camera origin towards `point`.

    Only hits closer than (distance to point - margin) count as blockers.

    Returns:
        (triangle index, hit distance); index is -1 when nothing blocks
    """
    distance = float(np.linalg.norm(point))
    direction = np.asarray(point, dtype=float) / distance
    hits = ray_triangle_distances(np.zeros(3), direction, triangles)
    if hits.size == 0:
        return -1, np.inf
    hits = np.where(hits < distance - margin, hits, np.inf)
    idx = int(np.argmin(hits))
    if not np.isfinite(hits[idx]):
        return -1, np.inf
    return idx, float(hits[idx])


@dataclass
class DepthBuffer:
    """Rasterized nearest-surface depth with the owning triangle per pixel."""
    camera: CameraIntrinsics
    depth: np.ndarray
    triangle: np.ndarray

    def sample(self, uv: np.ndarray) -> Tuple[float, int]:
        """Depth and triangle index at the buffer pixel containing image point uv."""
        col = int(np.floor(uv[0]))
        row = int(np.floor(uv[1]))
        if not (0 <= col < self.camera.img_w and 0 <= row < self.camera.img_h):
            return np.inf, -1
        return float(self.depth[row, col]), int(self.triangle[row, col])

    def candidates(self, uv: np.ndarray, radius: int = 1) -> np.ndarray:
        """Distinct triangle indices drawn within `radius` buffer pixels of image point uv."""
        col = int(np.floor(uv[0]))
        row = int(np.floor(uv[1]))
        r0, r1 = max(row - radius, 0), min(row + radius, self.camera.img_h - 1)
        c0, c1 = max(col - radius, 0), min(col + radius, self.camera.img_w - 1)
        if r0 > r1 or c0 > c1:
            return np.zeros(0, dtype=np.int64)
        window = self.triangle[r0:r1 + 1, c0:c1 + 1]
        return np.unique(window[window >= 0])


def rasterize_depth(K: CameraIntrinsics, triangles: np.ndarray) -> DepthBuffer:
    """
    Z-buffer a camera-frame triangle soup at the resolution of K.

    Depth per pixel center is the exact ray/plane intersection, so planar
    faces carry no interpolation error.

    Args:
        K: Intrinsics of the raster (use `CameraIntrinsics.scaled` to supersample)
        triangles: (T, 3, 3) camera-frame triangles, all vertices in front of the camera

    Returns:
        DepthBuffer with +inf depth and -1 triangle where nothing is drawn
    """
    depth = np.full((K.img_h, K.img_w), np.inf)
    owner = np.full((K.img_h, K.img_w), -1, dtype=np.int64)
    triangles = np.asarray(triangles, dtype=float).reshape(-1, 3, 3)
    for idx, tri in enumerate(triangles):
        if np.any(tri[:, 2] <= MIN_DEPTH):
            logger.debug(f"Skipping triangle {idx} crossing the camera plane")
            continue
        uv = np.column_stack((K.fx * tri[:, 0] / tri[:, 2] + K.cx, K.fy * tri[:, 1] / tri[:, 2] + K.cy))
        c0 = max(int(np.floor(uv[:, 0].min() - 0.5)), 0)
        c1 = min(int(np.ceil(uv[:, 0].max() - 0.5)), K.img_w - 1)
        r0 = max(int(np.floor(uv[:, 1].min() - 0.5)), 0)
        r1 = min(int(np.ceil(uv[:, 1].max() - 0.5)), K.img_h - 1)
        if c0 > c1 or r0 > r1:
            continue
        cols, rows = np.meshgrid(np.arange(c0, c1 + 1), np.arange(r0, r1 + 1))
        px = cols + 0.5
        py = rows + 0.5
        (x0, y0), (x1, y1), (x2, y2) = uv
        area = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
        if abs(area) < 1e-12:
            continue
        w0 = ((x1 - px) * (y2 - py) - (x2 - px) * (y1 - py)) / area
        w1 = ((x2 - px) * (y0 - py) - (x0 - px) * (y2 - py)) / area
        w2 = 1.0 - w0 - w1
        inside = (w0 >= 0) & (w1 >= 0) & (w2 >= 0)
        if not inside.any():
            continue
        normal = np.cross(tri[1] - tri[0], tri[2] - tri[0])
        rays = np.stack(((px - K.cx) / K.fx, (py - K.cy) / K.fy, np.ones_like(px)), axis=-1)
        with np.errstate(divide='ignore', invalid='ignore'):
            z = np.dot(normal, tri[0]) / (rays @ normal)
        z = np.where(inside & (z > MIN_DEPTH), z, np.inf)
        window = depth[r0:r1 + 1, c0:c1 + 1]
        closer = z < window
        window[closer] = z[closer]
        owner[r0:r1 + 1, c0:c1 + 1][closer] = idx
    return DepthBuffer(camera=K, depth=depth, triangle=owner)

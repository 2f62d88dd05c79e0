"""
2D/3D box types, IoU and greedy non-maximum suppression.

Box2D is center format everywhere; corner format only appears at file
boundaries through `from_corners` / `to_corners`.
"""
import logging
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from utils.errors import ValidationError
from .camera import normalize_angle, rotation_y

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Box2D:
    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise ValidationError(f"box size must be positive, got w={self.w} h={self.h}")

    @property
    def area(self) -> float:
        return self.w * self.h

    def to_corners(self) -> Tuple[float, float, float, float]:
        """(x1, y1, x2, y2)"""
        return (self.cx - self.w / 2, self.cy - self.h / 2, self.cx + self.w / 2, self.cy + self.h / 2)

    @classmethod
    def from_corners(cls, x1: float, y1: float, x2: float, y2: float) -> "Box2D":
        return cls(cx=(x1 + x2) / 2, cy=(y1 + y2) / 2, w=x2 - x1, h=y2 - y1)

    def as_array(self) -> np.ndarray:
        return np.array([self.cx, self.cy, self.w, self.h])

    def clip(self, img_w: float, img_h: float, min_size: float = 1.0) -> "Box2D":
        """Clip to [0, img_w] x [0, img_h], keeping at least `min_size` pixels per side."""
        x1, y1, x2, y2 = self.to_corners()
        x1, x2 = _clip_span(x1, x2, img_w, min_size)
        y1, y2 = _clip_span(y1, y2, img_h, min_size)
        return Box2D.from_corners(x1, y1, x2, y2)


def _clip_span(lo: float, hi: float, limit: float, min_size: float) -> Tuple[float, float]:
    lo = min(max(lo, 0.0), limit)
    hi = min(max(hi, 0.0), limit)
    if hi - lo < min_size:
        center = min(max((lo + hi) / 2, min_size / 2), limit - min_size / 2)
        lo, hi = center - min_size / 2, center + min_size / 2
    return lo, hi


@dataclass(frozen=True)
class Template3D:
    """Vehicle dimensions in meters: width, height, length."""
    w: float
    h: float
    l: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0 and self.l > 0):
            raise ValidationError(f"template dimensions must be positive, got {self.as_tuple()}")

    def as_tuple(self) -> Tuple[float, float, float]:
        return (self.w, self.h, self.l)

    def as_array(self) -> np.ndarray:
        return np.array([self.w, self.h, self.l])

    def axis_extents(self) -> np.ndarray:
        """Extents along the canonical (x, y, z) axes, i.e. (l, h, w)."""
        return np.array([self.l, self.h, self.w])


@dataclass(frozen=True)
class Box3D:
    """3D box: centroid (camera frame, meters), yaw and template."""
    center: Tuple[float, float, float]
    yaw: float
    template: Template3D

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        object.__setattr__(self, "yaw", normalize_angle(self.yaw))

    def corners(self) -> np.ndarray:
        """(8, 3) camera-frame corners."""
        half = self.template.axis_extents() / 2
        signs = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], dtype=float)
        return (signs * half) @ rotation_y(self.yaw).T + np.asarray(self.center)

    def bottom_center(self) -> np.ndarray:
        """KITTI location convention: center of the bottom face (y down)."""
        c = np.asarray(self.center, dtype=float)
        return c + np.array([0.0, self.template.h / 2, 0.0])

    def overlaps(self, other: "Box3D") -> bool:
        """True when the two boxes interpenetrate (separating-axis test on yawed boxes)."""
        a, b = self.corners(), other.corners()
        if a[:, 1].max() <= b[:, 1].min() or b[:, 1].max() <= a[:, 1].min():
            return False
        axes = []
        for yaw in (self.yaw, other.yaw):
            R = rotation_y(yaw)
            axes.extend([R[[0, 2], 0], R[[0, 2], 2]])
        a2, b2 = a[:, [0, 2]], b[:, [0, 2]]
        for axis in axes:
            pa, pb = a2 @ axis, b2 @ axis
            if pa.max() <= pb.min() or pb.max() <= pa.min():
                return False
        return True


@dataclass(frozen=True)
class ScoredBox:
    box: Box2D
    score: float

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValidationError(f"score must lie in [0, 1], got {self.score}")


def boxes_to_array(boxes: Sequence[Box2D]) -> np.ndarray:
    """(n, 4) array of center-format boxes."""
    if not boxes:
        return np.zeros((0, 4))
    return np.array([b.as_array() for b in boxes])


def iou(a: Box2D, b: Box2D) -> float:
    """Intersection over union of two boxes; 0 when disjoint."""
    ax1, ay1, ax2, ay2 = a.to_corners()
    bx1, by1, bx2, by2 = b.to_corners()
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """
    Pairwise IoU of center-format box arrays.

    Args:
        a: (n, 4) boxes
        b: (m, 4) boxes

    Returns:
        (n, m) IoU matrix
    """
    a = np.asarray(a, dtype=float).reshape(-1, 4)
    b = np.asarray(b, dtype=float).reshape(-1, 4)
    a1, a2 = a[:, :2] - a[:, 2:] / 2, a[:, :2] + a[:, 2:] / 2
    b1, b2 = b[:, :2] - b[:, 2:] / 2, b[:, :2] + b[:, 2:] / 2
    lo = np.maximum(a1[:, None, :], b1[None, :, :])
    hi = np.minimum(a2[:, None, :], b2[None, :, :])
    wh = np.clip(hi - lo, 0.0, None)
    inter = wh[..., 0] * wh[..., 1]
    union = (a[:, 2] * a[:, 3])[:, None] + (b[:, 2] * b[:, 3])[None, :] - inter
    return np.where(inter > 0, inter / np.where(union > 0, union, 1.0), 0.0)


def nms(dets: Sequence[ScoredBox], iou_threshold: float) -> List[int]:
    """
    Greedy non-maximum suppression.

    Boxes are visited by descending score (ties: lower original index first);
    a box is kept iff its IoU with every kept box is <= iou_threshold.

    Returns:
        Kept indices in descending score order
    """
    if not 0.0 <= iou_threshold <= 1.0:
        raise ValidationError(f"iou_threshold must lie in [0, 1], got {iou_threshold}")
    if not dets:
        return []
    scores = np.array([d.score for d in dets])
    order = np.lexsort((np.arange(len(dets)), -scores))
    keep: List[int] = []
    for idx in order:
        if all(iou(dets[idx].box, dets[k].box) <= iou_threshold for k in keep):
            keep.append(int(idx))
    logger.debug(f"NMS kept {len(keep)} of {len(dets)} boxes at IoU {iou_threshold}")
    return keep


def wrap_angle_difference(a: float, b: float) -> float:
    """Signed difference a - b wrapped to (-pi, pi]."""
    return normalize_angle(a - b)

"""
Proposal geometry: anchor grids, proposal/GT assignment and the
coarse-to-fine box refinement cascade.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from geometry.boxes import Box2D, boxes_to_array, iou_matrix
from utils.errors import ShapeMismatch, ValidationError
from .codec import BoxDeltas, ProposalLabel, decode_box_deltas, encode_box_deltas

logger = logging.getLogger(__name__)

DEFAULT_ASPECT_RATIOS: Tuple[float, ...] = (0.5, 0.7, 1.0, 1.5, 2.0, 2.5, 3.0)
DEFAULT_SCALES: Tuple[float, ...] = tuple(float(s) for s in np.geomspace(16.0, 600.0, 10))
DEFAULT_STRIDE = 16.0
POSITIVE_IOU = 0.7
N_REFINEMENT_LEVELS = 3


@dataclass(frozen=True)
class AnchorConfig:
    """Anchor shapes: ratio = w / h, scale = sqrt(area) in pixels."""
    aspect_ratios: Tuple[float, ...] = DEFAULT_ASPECT_RATIOS
    scales: Tuple[float, ...] = DEFAULT_SCALES
    stride: float = DEFAULT_STRIDE

    def __post_init__(self):
        object.__setattr__(self, "aspect_ratios", tuple(float(r) for r in self.aspect_ratios))
        object.__setattr__(self, "scales", tuple(float(s) for s in self.scales))
        if not self.aspect_ratios or not self.scales:
            raise ValidationError("anchor ratios and scales must be nonempty")
        if min(self.aspect_ratios) <= 0 or min(self.scales) <= 0:
            raise ValidationError("anchor ratios and scales must be positive")
        if self.stride <= 0:
            raise ValidationError(f"anchor stride must be positive, got {self.stride}")

    @property
    def anchors_per_location(self) -> int:
        return len(self.aspect_ratios) * len(self.scales)

    def grid_shape(self, img_w: float, img_h: float) -> Tuple[int, int]:
        """(columns, rows) of anchor locations."""
        return math.ceil(img_w / self.stride), math.ceil(img_h / self.stride)


def anchor_shapes(cfg: AnchorConfig) -> np.ndarray:
    """(A, 2) anchor (w, h) pairs in ratio-major order."""
    ratios = np.repeat(np.asarray(cfg.aspect_ratios), len(cfg.scales))
    scales = np.tile(np.asarray(cfg.scales), len(cfg.aspect_ratios))
    root = np.sqrt(ratios)
    return np.stack([scales * root, scales / root], axis=1)


def generate_anchor_array(cfg: AnchorConfig, img_w: float, img_h: float) -> np.ndarray:
    """
    Center-format anchor array.

    Locations are row-major over the grid; every location carries all
    ratio x scale shapes. Anchors are not clipped.

    Returns:
        (cols * rows * A, 4) array of (cx, cy, w, h)
    """
    if img_w <= 0 or img_h <= 0:
        raise ValidationError(f"image size must be positive, got {img_w}x{img_h}")
    cols, rows = cfg.grid_shape(img_w, img_h)
    xs = (np.arange(cols) + 0.5) * cfg.stride
    ys = (np.arange(rows) + 0.5) * cfg.stride
    cy, cx = np.meshgrid(ys, xs, indexing="ij")
    centers = np.stack([cx.ravel(), cy.ravel()], axis=1)
    shapes = anchor_shapes(cfg)
    n_loc, n_shape = centers.shape[0], shapes.shape[0]
    anchors = np.concatenate([
        np.repeat(centers, n_shape, axis=0),
        np.tile(shapes, (n_loc, 1)),
    ], axis=1)
    logger.debug(f"Generated {anchors.shape[0]} anchors on a {cols}x{rows} grid")
    return anchors


def generate_anchors(cfg: AnchorConfig, img_w: float, img_h: float) -> List[Box2D]:
    """Anchors as Box2D objects (see generate_anchor_array for ordering)."""
    return [Box2D(*row) for row in generate_anchor_array(cfg, img_w, img_h).tolist()]


def assign_labels(proposals: Sequence[Box2D], gts: Sequence[Box2D],
                  pos_threshold: float = POSITIVE_IOU) -> List[ProposalLabel]:
    """
    Threshold assignment: C = 1 with the argmax-IoU GT when that IoU exceeds
    pos_threshold, else background. Ties go to the lower GT index.
    """
    if not 0.0 < pos_threshold < 1.0:
        raise ValidationError(f"pos_threshold must lie in (0, 1), got {pos_threshold}")
    if not proposals:
        return []
    if not gts:
        return [ProposalLabel(C=0) for _ in proposals]
    overlaps = iou_matrix(boxes_to_array(proposals), boxes_to_array(gts))
    best = np.argmax(overlaps, axis=1)
    best_iou = overlaps[np.arange(len(proposals)), best]
    labels = [
        ProposalLabel(C=1, gt_index=int(g)) if v > pos_threshold else ProposalLabel(C=0)
        for g, v in zip(best, best_iou)
    ]
    logger.debug(f"Assigned {sum(lab.C for lab in labels)} positives among {len(labels)} proposals")
    return labels


def refine_boxes(boxes: Sequence[Box2D], deltas: Sequence[BoxDeltas], img_w: float, img_h: float) -> List[Box2D]:
    """Decode per-box offsets, then clip to the image with a 1 px minimum size."""
    if len(boxes) != len(deltas):
        raise ShapeMismatch(f"{len(boxes)} boxes but {len(deltas)} deltas")
    return [decode_box_deltas(b, d).clip(img_w, img_h, min_size=1.0) for b, d in zip(boxes, deltas)]


def target_deltas(boxes: Sequence[Box2D], labels: Sequence[ProposalLabel], gts: Sequence[Box2D]) -> List[BoxDeltas]:
    """Regression targets per proposal; zeros for background."""
    return [
        encode_box_deltas(b, gts[lab.gt_index]) if lab.C == 1 else BoxDeltas.zeros()
        for b, lab in zip(boxes, labels)
    ]


@dataclass
class CascadeLevel:
    level: int
    boxes: List[Box2D]
    labels: List[ProposalLabel]
    targets: List[BoxDeltas] = field(default_factory=list)


def refine_cascade(proposals: Sequence[Box2D], gts: Sequence[Box2D], img_w: float, img_h: float,
                   level_deltas: Optional[Sequence[Sequence[BoxDeltas]]] = None,
                   pos_threshold: float = POSITIVE_IOU) -> List[CascadeLevel]:
    """
    Run the three-level coarse-to-fine refinement on box geometry.

    Level 1 holds the input proposals. Each following level refines the
    previous level's boxes with the given deltas, or with the exact target
    deltas of the previous level when level_deltas is None. Labels and
    targets are reassigned at every level with the same positive threshold.

    Args:
        proposals: Level-1 boxes
        gts: Ground-truth boxes of the image
        img_w, img_h: Image size used for clipping
        level_deltas: Two delta lists (level 1 -> 2 and level 2 -> 3)
        pos_threshold: IoU above which a proposal is a vehicle

    Returns:
        One CascadeLevel per refinement level
    """
    if level_deltas is not None and len(level_deltas) != N_REFINEMENT_LEVELS - 1:
        raise ShapeMismatch(f"expected {N_REFINEMENT_LEVELS - 1} delta lists, got {len(level_deltas)}")
    levels: List[CascadeLevel] = []
    boxes = list(proposals)
    for level in range(1, N_REFINEMENT_LEVELS + 1):
        labels = assign_labels(boxes, gts, pos_threshold)
        targets = target_deltas(boxes, labels, gts)
        levels.append(CascadeLevel(level=level, boxes=boxes, labels=labels, targets=targets))
        if level == N_REFINEMENT_LEVELS:
            break
        deltas = targets if level_deltas is None else level_deltas[level - 1]
        boxes = refine_boxes(boxes, deltas, img_w, img_h)
    logger.info(f"Cascade positives per level: {[sum(lab.C for lab in lv.labels) for lv in levels]}")
    return levels

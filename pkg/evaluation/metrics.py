"""
Detection and vehicle-property metrics: AP, AOS, ALP, part localization,
visibility accuracy and template correctness.

Curve metrics share one engine: detections are ranked by score, a
precision/recall point is taken at every distinct score threshold, and each
true positive contributes a weight in [0, 1] to the precision numerator
(1 for AP, orientation similarity for AOS, a distance indicator for ALP).
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from geometry.boxes import Box2D, ScoredBox, Template3D, boxes_to_array, iou_matrix, wrap_angle_difference
from utils.errors import ShapeMismatch, ValidationError
from .difficulty import Difficulty, parse_difficulty

logger = logging.getLogger(__name__)

DONTCARE_OVERLAP = 0.5


@dataclass(frozen=True)
class EvalConfig:
    iou_threshold: float = 0.7
    alp_distances: Tuple[float, ...] = (1.0, 2.0)
    part_dist_threshold: float = 20.0
    part_norm_height: float = 155.0
    template_rel_tol: float = 0.2
    interpolation: int = 11
    difficulty: str = "all"

    def __post_init__(self):
        object.__setattr__(self, "alp_distances", tuple(float(d) for d in self.alp_distances))
        if not 0.0 < self.iou_threshold <= 1.0:
            raise ValidationError(f"iou_threshold must lie in (0, 1], got {self.iou_threshold}")
        if not self.alp_distances or min(self.alp_distances) <= 0:
            raise ValidationError("alp_distances must be positive")
        if self.part_dist_threshold <= 0 or self.part_norm_height <= 0:
            raise ValidationError("part thresholds must be positive")
        if not 0.0 < self.template_rel_tol < 1.0:
            raise ValidationError(f"template_rel_tol must lie in (0, 1), got {self.template_rel_tol}")
        if self.interpolation not in (11, 41):
            raise ValidationError(f"interpolation must be 11 or 41, got {self.interpolation}")
        object.__setattr__(self, "difficulty", parse_difficulty(self.difficulty).value)

    @property
    def level(self) -> Difficulty:
        return Difficulty(self.difficulty)

    def to_dict(self) -> dict:
        return {
            "iou_threshold": self.iou_threshold,
            "alp_distances": list(self.alp_distances),
            "part_dist_threshold": self.part_dist_threshold,
            "part_norm_height": self.part_norm_height,
            "template_rel_tol": self.template_rel_tol,
            "interpolation": self.interpolation,
            "difficulty": self.difficulty,
        }


@dataclass
class MatchResult:
    """
    Matching of one image's detections against its ground truths.

    Ignored detections (claimed by an ignored GT or a don't-care region) count
    neither as TP nor as FP.
    """
    scores: np.ndarray
    det_tp: np.ndarray
    det_gt: np.ndarray
    det_ignored: np.ndarray
    gt_matched: np.ndarray
    gt_ignored: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.gt_ignored is None:
            self.gt_ignored = np.zeros(self.gt_matched.shape[0], dtype=bool)

    @property
    def n_gt(self) -> int:
        return int(np.sum(~self.gt_ignored))

    @property
    def true_positives(self) -> List[Tuple[int, int]]:
        """(detection index, GT index) pairs."""
        return [(int(d), int(self.det_gt[d])) for d in np.flatnonzero(self.det_tp)]


def _overlap_with_regions(dets: np.ndarray, regions: np.ndarray) -> np.ndarray:
    """Intersection over detection area, (n_det, n_region)."""
    d1, d2 = dets[:, :2] - dets[:, 2:] / 2, dets[:, :2] + dets[:, 2:] / 2
    r1, r2 = regions[:, :2] - regions[:, 2:] / 2, regions[:, :2] + regions[:, 2:] / 2
    wh = np.clip(np.minimum(d2[:, None], r2[None]) - np.maximum(d1[:, None], r1[None]), 0.0, None)
    return wh[..., 0] * wh[..., 1] / (dets[:, 2] * dets[:, 3])[:, None]


def match_detections(dets: Sequence[ScoredBox], gts: Sequence[Box2D], iou_threshold: float,
                     gt_ignored: Optional[Sequence[bool]] = None,
                     dontcare: Sequence[Box2D] = ()) -> MatchResult:
    """
    Greedy matching in descending score order (ties: lower index first).

    Each detection claims the unmatched, non-ignored GT of highest IoU with
    IoU >= iou_threshold (ties: lower GT index). Unclaimed detections that
    overlap an ignored GT at the same threshold, or lie at least half inside a
    don't-care region, are ignored; the rest are false positives.
    """
    n_det, n_gt = len(dets), len(gts)
    ignored_gt = np.zeros(n_gt, dtype=bool) if gt_ignored is None else np.asarray(gt_ignored, dtype=bool)
    if ignored_gt.shape != (n_gt,):
        raise ShapeMismatch(f"ignore mask has {ignored_gt.shape[0]} entries for {n_gt} GTs")
    scores = np.array([d.score for d in dets], dtype=float)
    det_tp = np.zeros(n_det, dtype=bool)
    det_gt = np.full(n_det, -1, dtype=np.int64)
    det_ignored = np.zeros(n_det, dtype=bool)
    gt_matched = np.zeros(n_gt, dtype=bool)
    if n_det == 0:
        return MatchResult(scores, det_tp, det_gt, det_ignored, gt_matched, ignored_gt)
    det_arr = boxes_to_array([d.box for d in dets])
    overlaps = iou_matrix(det_arr, boxes_to_array(gts)) if n_gt else np.zeros((n_det, 0))
    region_overlap = (_overlap_with_regions(det_arr, boxes_to_array(dontcare))
                      if len(dontcare) else np.zeros((n_det, 0)))
    for d in np.lexsort((np.arange(n_det), -scores)):
        candidates = overlaps[d].copy()
        candidates[gt_matched | ignored_gt] = -1.0
        if n_gt and candidates.max() >= iou_threshold:
            g = int(np.argmax(candidates))
            det_tp[d], det_gt[d], gt_matched[g] = True, g, True
        elif n_gt and np.any(overlaps[d][ignored_gt] >= iou_threshold):
            det_ignored[d] = True
        elif region_overlap.shape[1] and region_overlap[d].max() >= DONTCARE_OVERLAP:
            det_ignored[d] = True
    return MatchResult(scores, det_tp, det_gt, det_ignored, gt_matched, ignored_gt)


@dataclass
class CurvePoint:
    threshold: float
    recall: float
    precision: float


def weighted_pr_curve(scores: np.ndarray, tp: np.ndarray, weights: np.ndarray, n_gt: int) -> List[CurvePoint]:
    """
    One point per distinct score threshold, from highest to lowest.

    recall = TP / n_gt; precision = sum of TP weights / (TP + FP), counting
    every detection with score >= threshold.
    """
    scores = np.asarray(scores, dtype=float)
    tp = np.asarray(tp, dtype=bool)
    if scores.size == 0:
        return []
    weights = np.where(tp, np.asarray(weights, dtype=float), 0.0)
    order = np.argsort(-scores, kind="stable")
    s, t, w = scores[order], tp[order], weights[order]
    cum_tp = np.cumsum(t)
    cum_w = np.cumsum(w)
    points = []
    # last index of each run of equal scores
    ends = np.flatnonzero(np.append(s[1:] != s[:-1], True))
    for e in ends:
        n = e + 1
        points.append(CurvePoint(threshold=float(s[e]), recall=float(cum_tp[e]) / n_gt if n_gt else 0.0,
                                 precision=float(cum_w[e]) / n))
    return points


def interpolated_ap(points: Sequence[CurvePoint], interpolation: int = 11) -> float:
    """Mean over recall levels r of the max precision at recall >= r (0 when unreachable)."""
    if interpolation not in (11, 41):
        raise ValidationError(f"interpolation must be 11 or 41, got {interpolation}")
    if not points:
        return 0.0
    recall = np.array([p.recall for p in points])
    precision = np.array([p.precision for p in points])
    total = 0.0
    for r in np.linspace(0.0, 1.0, interpolation):
        reach = recall >= r - 1e-12
        total += float(precision[reach].max()) if reach.any() else 0.0
    return total / interpolation


def pool_detections(matches: Sequence[MatchResult], weights: Optional[Sequence[np.ndarray]] = None):
    scores, tp, w = [], [], []
    for i, m in enumerate(matches):
        keep = ~m.det_ignored
        scores.append(m.scores[keep])
        tp.append(m.det_tp[keep])
        w.append((np.ones(m.scores.shape[0]) if weights is None else np.asarray(weights[i], dtype=float))[keep])
    if not scores:
        return np.zeros(0), np.zeros(0, dtype=bool), np.zeros(0)
    return np.concatenate(scores), np.concatenate(tp), np.concatenate(w)


def _curve_metric(matches, n_gt: int, interpolation: int, weights=None) -> float:
    if n_gt == 0:
        return 0.0
    scores, tp, w = pool_detections(matches, weights)
    return interpolated_ap(weighted_pr_curve(scores, tp, w, n_gt), interpolation)


def average_precision(matches: Sequence[MatchResult], n_gt: int, interpolation: int = 11) -> float:
    """Interpolated AP over the pooled detections of every image; 0 when n_gt == 0."""
    return _curve_metric(matches, n_gt, interpolation)


def orientation_weights(matches: Sequence[MatchResult], det_yaws: Sequence[np.ndarray],
                        gt_yaws: Sequence[np.ndarray]) -> List[np.ndarray]:
    """Per-detection (1 + cos dtheta) / 2 for TPs, 0 otherwise."""
    out = []
    for m, dy, gy in zip(matches, det_yaws, gt_yaws):
        w = np.zeros(m.scores.shape[0])
        for d, g in m.true_positives:
            w[d] = (1.0 + np.cos(wrap_angle_difference(float(dy[d]), float(gy[g])))) / 2.0
        out.append(w)
    return out


def localization_weights(matches: Sequence[MatchResult], det_centers: Sequence[np.ndarray],
                         gt_centers: Sequence[np.ndarray], threshold: float) -> List[np.ndarray]:
    """Per-detection indicator of 3D center error < threshold for TPs."""
    out = []
    for m, dc, gc in zip(matches, det_centers, gt_centers):
        w = np.zeros(m.scores.shape[0])
        for d, g in m.true_positives:
            w[d] = float(np.linalg.norm(np.asarray(dc[d]) - np.asarray(gc[g])) < threshold)
        out.append(w)
    return out


def aos(matches: Sequence[MatchResult], det_yaws: Sequence[np.ndarray], gt_yaws: Sequence[np.ndarray],
        n_gt: int, interpolation: int = 11) -> float:
    """AP with every TP weighted by its orientation similarity."""
    return _curve_metric(matches, n_gt, interpolation, orientation_weights(matches, det_yaws, gt_yaws))


def alp(matches: Sequence[MatchResult], det_centers: Sequence[np.ndarray], gt_centers: Sequence[np.ndarray],
        threshold: float, n_gt: int, interpolation: int = 11) -> float:
    """AP with every TP weighted by whether its 3D center lies within `threshold` meters."""
    weights = localization_weights(matches, det_centers, gt_centers, threshold)
    return _curve_metric(matches, n_gt, interpolation, weights)


def part_localization_rate(det_parts: Sequence[np.ndarray], gt_parts: Sequence[np.ndarray],
                           gt_boxes: Sequence[Box2D], cfg: EvalConfig = EvalConfig(),
                           gt_visibility: Optional[Sequence[np.ndarray]] = None,
                           by_class: bool = False) -> Union[float, Tuple[float, Dict[int, float]]]:
    """
    Share of parts whose error, rescaled to a fixed box height, is below the threshold.

    Args:
        det_parts, gt_parts: (N, 2) pixel parts per matched pair
        gt_boxes: GT 2D box per pair (its height normalizes the error)
        cfg: Threshold and normalization height
        gt_visibility: (N,) GT classes per pair, needed for by_class
        by_class: Also return the rate per GT visibility class

    Returns:
        Rate in [0, 1] (0 with no pairs), optionally with a class -> rate dict
    """
    if not len(det_parts) == len(gt_parts) == len(gt_boxes):
        raise ShapeMismatch("part lists and boxes differ in length")
    correct, classes = [], []
    for i, (dp, gp, box) in enumerate(zip(det_parts, gt_parts, gt_boxes)):
        dp, gp = np.asarray(dp, dtype=float), np.asarray(gp, dtype=float)
        if dp.shape != gp.shape:
            raise ShapeMismatch(f"pair {i}: parts {dp.shape} vs {gp.shape}")
        err = np.linalg.norm(dp - gp, axis=1) * (cfg.part_norm_height / box.h)
        correct.append(err < cfg.part_dist_threshold)
        if by_class:
            if gt_visibility is None:
                raise ValidationError("by_class needs gt_visibility")
            classes.append(np.asarray(gt_visibility[i], dtype=np.int64))
    flags = np.concatenate(correct) if correct else np.zeros(0, dtype=bool)
    rate = float(flags.mean()) if flags.size else 0.0
    if not by_class:
        return rate
    labels = np.concatenate(classes) if classes else np.zeros(0, dtype=np.int64)
    per_class = {int(c): float(flags[labels == c].mean()) for c in np.unique(labels)}
    return rate, per_class


def visibility_accuracy(det_vis: Sequence[np.ndarray], gt_vis: Sequence[np.ndarray]) -> float:
    """Four-class accuracy over all parts of all matched pairs (0 with no pairs)."""
    if len(det_vis) != len(gt_vis):
        raise ShapeMismatch("visibility lists differ in length")
    hits = total = 0
    for dv, gv in zip(det_vis, gt_vis):
        dv, gv = np.asarray(dv).reshape(-1), np.asarray(gv).reshape(-1)
        if dv.shape != gv.shape:
            raise ShapeMismatch(f"visibility vectors {dv.shape} vs {gv.shape}")
        hits += int(np.sum(dv == gv))
        total += dv.size
    return hits / total if total else 0.0


def template_correct(det: Template3D, gt: Template3D, rel_tol: float) -> bool:
    rel = np.abs(gt.as_array() - det.as_array()) / gt.as_array()
    return bool(np.all(rel < rel_tol))


def template_accuracy(det_templates: Sequence[Template3D], gt_templates: Sequence[Template3D],
                      rel_tol: float = 0.2) -> float:
    """Share of pairs whose (w, h, l) are all within rel_tol of the GT (0 with no pairs)."""
    if len(det_templates) != len(gt_templates):
        raise ShapeMismatch("template lists differ in length")
    if not det_templates:
        return 0.0
    return float(np.mean([template_correct(d, g, rel_tol) for d, g in zip(det_templates, gt_templates)]))
